/**
 * Wire types for the v1 control protocol (see ../PROTOCOL.md).
 *
 * These are plain TypeScript shapes so the browser bundle stays
 * dependency-free; the test suite holds zod schemas that contract-check
 * every outgoing message against the protocol document.
 */

export const PROTOCOL_VERSION = 1;
export const WEIGHT_DIMS = 35;

export type RequestId = number | string;

export type TriggerMode = 'beat' | 'loop' | 'cont' | 'bow' | 'fence';
export type AgentMode = 'macat' | 'proactive' | 'reactive';
export type WeightPreset = 'centroid' | 'periodicity' | 'f0' | 'duration';

export interface ParamValues {
    tempo: number;
    congruence: number;
    forward_jump: number;
    attack_ms: number;
    release_ms: number;
    reverse: boolean;
    resample_ratio: number;
    pitch_shift_cents: number;
    one_shot: boolean;
    tempo_lock: boolean;
    viz_dim: number;
}

export type ParamField = keyof ParamValues;

/** Validation ranges mirrored from PROTOCOL.md; the engine re-validates. */
export const PARAM_RANGES: Record<ParamField, { min?: number; max?: number; kind: 'number' | 'bool' | 'int' }> = {
    tempo: { min: 1e-9, kind: 'number' },
    congruence: { min: 0, max: 1, kind: 'number' },
    forward_jump: { min: 0, max: 100, kind: 'number' },
    attack_ms: { min: 0, kind: 'number' },
    release_ms: { min: 0, kind: 'number' },
    reverse: { kind: 'bool' },
    resample_ratio: { min: 1e-9, kind: 'number' },
    pitch_shift_cents: { kind: 'number' },
    one_shot: { kind: 'bool' },
    tempo_lock: { kind: 'bool' },
    viz_dim: { min: 0, max: 30, kind: 'int' },
};

export interface ControlMessage {
    v: typeof PROTOCOL_VERSION;
    id: RequestId;
    op: string;
    args?: Record<string, unknown>;
}

export interface OkResponse {
    v: number;
    id: RequestId;
    ok: true;
    result?: Record<string, unknown>;
}

export interface ErrorResponse {
    v: number;
    id: RequestId;
    ok: false;
    error: { code: string; field?: string; message: string; permitted?: string };
}

export type Response = OkResponse | ErrorResponse;

export type EventKind =
    | 'node_played'
    | 'scene_boundary'
    | 'state_snapshot'
    | 'viz_frame'
    | 'error';

export interface EngineEvent {
    v: number;
    event: EventKind;
    t: number;
    payload: Record<string, unknown>;
}

export interface NodePlayedPayload {
    node: number;
    segment: number;
    dur: number;
    artist: string;
    song: string;
    t: number;
}

export interface VizFramePayload {
    bark: number[];
    grid: number[][];
    grid_dim: number;
    rows: number;
    cols: number;
    current_node: number | null;
    previous_node: number | null;
    segment: number | null;
}

export interface StateSnapshotPayload {
    mode: AgentMode;
    running: boolean;
    muted: boolean;
    tempo: number;
    congruence: number;
    attack_ms: number;
    release_ms: number;
    reverse: boolean;
    resample_ratio: number;
    pitch_shift_cents: number;
    one_shot: boolean;
    tempo_lock: boolean;
    trigger_mode: TriggerMode;
    weights: number[];
    current_node: number | null;
    previous_node: number | null;
    playing_segment: number | null;
    scene_remaining: number;
    num_segments: number;
    som_rows: number;
    som_cols: number;
    viz_dim: number;
    t: number;
}

export interface ScatterPoint {
    segment: number;
    x: number;
    y: number;
    opacity: number;
    size: number;
}

export function isResponse(msg: Record<string, unknown>): boolean {
    return 'ok' in msg && 'id' in msg;
}

export function isEvent(msg: Record<string, unknown>): boolean {
    return 'event' in msg && 'payload' in msg;
}

export function parseWireLine(line: string): Response | EngineEvent | null {
    const trimmed = line.trim();
    if (!trimmed) {
        return null;
    }
    const parsed = JSON.parse(trimmed) as Record<string, unknown>;
    if (isResponse(parsed)) {
        return parsed as unknown as Response;
    }
    if (isEvent(parsed)) {
        return parsed as unknown as EngineEvent;
    }
    throw new Error('wire line is neither a response nor an event');
}
