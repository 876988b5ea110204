/**
 * Console state: a pure fold over the engine's event stream plus local
 * pending edits. `applyEvent` never mutates, so a recorded session file
 * replays to the same final state every time.
 */

import {
    EngineEvent,
    NodePlayedPayload,
    ParamValues,
    ScatterPoint,
    StateSnapshotPayload,
    VizFramePayload,
} from './protocol.js';

export type ConnectionStatus = 'disconnected' | 'connecting' | 'connected' | 'replay';

export interface GridView {
    values: number[][];
    rows: number;
    cols: number;
    dim: number;
}

export interface UiState {
    connection: ConnectionStatus;
    snapshot: StateSnapshotPayload | null;
    panel: ParamValues;
    pending: Partial<ParamValues>;
    triggerMode: string;
    weights: number[];
    grid: GridView | null;
    currentNode: number | null;
    previousNode: number | null;
    playingSegment: number | null;
    selectedSegment: number | null;
    scatter: ScatterPoint[];
    bark: number[] | null;
    sceneRemaining: number;
    nodeTransitions: number;
    oneShotBlink: number;
    lastEventT: number;
    lastError: { code: string; message: string } | null;
}

export const DEFAULT_PANEL: ParamValues = {
    tempo: 120,
    congruence: 0.5,
    forward_jump: 50,
    attack_ms: 10,
    release_ms: 10,
    reverse: false,
    resample_ratio: 1,
    pitch_shift_cents: 0,
    one_shot: false,
    tempo_lock: false,
    viz_dim: 0,
};

export function initialState(): UiState {
    return {
        connection: 'disconnected',
        snapshot: null,
        panel: { ...DEFAULT_PANEL },
        pending: {},
        triggerMode: 'beat',
        weights: [],
        grid: null,
        currentNode: null,
        previousNode: null,
        playingSegment: null,
        selectedSegment: null,
        scatter: [],
        bark: null,
        sceneRemaining: 60,
        nodeTransitions: 0,
        oneShotBlink: 0,
        lastEventT: 0,
        lastError: null,
    };
}

function nodeCount(state: UiState): number | null {
    if (state.grid) {
        return state.grid.rows * state.grid.cols;
    }
    if (state.snapshot) {
        return state.snapshot.som_rows * state.snapshot.som_cols;
    }
    return null;
}

/** Node ids outside the model are never rendered. */
function validNode(state: UiState, node: number | null | undefined): number | null {
    if (node === null || node === undefined) {
        return null;
    }
    const count = nodeCount(state);
    if (count !== null && (node < 0 || node >= count)) {
        return null;
    }
    return node;
}

function panelFromSnapshot(snapshot: StateSnapshotPayload, pending: Partial<ParamValues>): ParamValues {
    const fromEngine: ParamValues = {
        tempo: snapshot.tempo,
        congruence: snapshot.congruence,
        forward_jump: snapshot.congruence * 100,
        attack_ms: snapshot.attack_ms,
        release_ms: snapshot.release_ms,
        reverse: snapshot.reverse,
        resample_ratio: snapshot.resample_ratio,
        pitch_shift_cents: snapshot.pitch_shift_cents,
        one_shot: snapshot.one_shot,
        tempo_lock: snapshot.tempo_lock,
        viz_dim: snapshot.viz_dim,
    };
    return { ...fromEngine, ...pending };
}

export function applyEvent(state: UiState, event: EngineEvent): UiState {
    switch (event.event) {
        case 'node_played': {
            const payload = event.payload as unknown as NodePlayedPayload;
            const node = validNode(state, payload.node);
            return {
                ...state,
                previousNode: state.currentNode,
                currentNode: node,
                playingSegment: payload.segment,
                selectedSegment: payload.segment,
                nodeTransitions: state.nodeTransitions + 1,
                oneShotBlink: state.oneShotBlink + 1,
                lastEventT: event.t,
            };
        }
        case 'viz_frame': {
            const payload = event.payload as unknown as VizFramePayload;
            const grid: GridView = {
                values: payload.grid,
                rows: payload.rows,
                cols: payload.cols,
                dim: payload.grid_dim,
            };
            const next = { ...state, grid, bark: payload.bark, lastEventT: event.t };
            // viz frames refresh the highlight but must not double-count
            // transitions: node_played owns the current/previous hand-off
            next.currentNode = validNode(next, payload.current_node);
            next.previousNode = validNode(next, payload.previous_node);
            if (payload.segment !== null && payload.segment !== undefined) {
                next.playingSegment = payload.segment;
            }
            return next;
        }
        case 'state_snapshot': {
            const payload = event.payload as unknown as StateSnapshotPayload;
            const next: UiState = {
                ...state,
                snapshot: payload,
                panel: panelFromSnapshot(payload, state.pending),
                triggerMode: payload.trigger_mode,
                weights: payload.weights,
                sceneRemaining: payload.scene_remaining,
                playingSegment: payload.playing_segment,
                lastEventT: event.t,
            };
            next.currentNode = validNode(next, payload.current_node);
            next.previousNode = validNode(next, payload.previous_node);
            return next;
        }
        case 'scene_boundary': {
            const payload = event.payload as { scene_seconds?: number };
            return {
                ...state,
                sceneRemaining: payload.scene_seconds ?? 60,
                lastEventT: event.t,
            };
        }
        case 'error': {
            const payload = event.payload as { code: string; message: string };
            return { ...state, lastError: payload, lastEventT: event.t };
        }
        default:
            return state;
    }
}

export function setScatter(state: UiState, points: ScatterPoint[]): UiState {
    return { ...state, scatter: points };
}

export function setConnection(state: UiState, connection: ConnectionStatus): UiState {
    return { ...state, connection };
}
