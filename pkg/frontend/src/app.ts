/**
 * Browser entry: one WebSocket to the engine, canvas rendering of the SOM
 * grid, scatter plot and bark meter, and the control panel. All state flows
 * through the pure reducer so a recorded session replays identically.
 */

import { ControlDispatcher, RequestClient } from './controls.js';
import {
    ControlMessage,
    EngineEvent,
    ParamField,
    Response,
    ScatterPoint,
    TriggerMode,
    isEvent,
    isResponse,
} from './protocol.js';
import { projectPoints, scatterStyles } from './scatter.js';
import { somGridCells } from './somGrid.js';
import { UiState, applyEvent, initialState, setConnection, setScatter } from './state.js';
import { replayStepwise } from './replay.js';

let state: UiState = initialState();
let socket: WebSocket | null = null;
let reconnectDelay = 500;

const $ = (id: string) => document.getElementById(id) as HTMLElement;

function sendRaw(msg: ControlMessage): void {
    if (socket && socket.readyState === WebSocket.OPEN) {
        socket.send(JSON.stringify(msg) + '\n');
    }
}

const requests = new RequestClient(sendRaw);
const dispatcher = new ControlDispatcher(sendRaw, {
    onOptimistic(fields) {
        state = { ...state, pending: { ...state.pending, ...fields }, panel: { ...state.panel, ...fields } };
        renderPanel();
    },
    onCommit(fields) {
        const pending = { ...state.pending };
        for (const f of fields) {
            delete pending[f];
        }
        state = { ...state, pending };
    },
    onRevert(action) {
        const pending = { ...state.pending };
        for (const f of action.fields) {
            delete pending[f];
        }
        state = { ...state, pending, lastError: action.error };
        if (state.snapshot) {
            state = applyEvent(state, {
                v: 1,
                event: 'state_snapshot',
                t: state.lastEventT,
                payload: state.snapshot as unknown as Record<string, unknown>,
            });
        }
        renderPanel();
        renderStatus();
    },
});

function connect(): void {
    const url = (document.getElementById('server-url') as HTMLInputElement).value;
    state = setConnection(state, 'connecting');
    renderStatus();
    socket = new WebSocket(url);
    socket.onopen = () => {
        state = setConnection(state, 'connected');
        reconnectDelay = 500;
        requests.request('subscribe', { kinds: ['node_played', 'scene_boundary', 'state_snapshot', 'viz_frame', 'error'] });
        requests.request('query_state', {}, (r) => {
            if (r.ok && r.result) {
                state = applyEvent(state, { v: 1, event: 'state_snapshot', t: 0, payload: r.result });
                renderAll();
            }
        });
        requests.request('query_scatter', {}, (r) => {
            if (r.ok && r.result) {
                state = setScatter(state, (r.result as { points: ScatterPoint[] }).points);
                renderScatter();
            }
        });
        renderStatus();
    };
    socket.onmessage = (message) => {
        for (const line of String(message.data).split('\n')) {
            if (!line.trim()) {
                continue;
            }
            const parsed = JSON.parse(line) as Record<string, unknown>;
            if (isResponse(parsed)) {
                const response = parsed as unknown as Response;
                if (!requests.handleResponse(response)) {
                    dispatcher.handleResponse(response);
                }
            } else if (isEvent(parsed)) {
                state = applyEvent(state, parsed as unknown as EngineEvent);
                renderAll();
            }
        }
    };
    socket.onclose = () => {
        state = setConnection(state, 'disconnected');
        renderStatus();
        setTimeout(connect, reconnectDelay);
        reconnectDelay = Math.min(reconnectDelay * 2, 10_000);
    };
}

// ----------------------------------------------------------------- render

function renderStatus(): void {
    $('status').textContent = state.connection;
    $('scene').textContent = state.sceneRemaining.toFixed(1);
    $('now-playing').textContent =
        state.currentNode === null
            ? 'idle'
            : `node ${state.currentNode}  seg ${state.playingSegment ?? '-'}`;
    const snapshot = state.snapshot;
    if (snapshot) {
        $('model-info').textContent = `numData: ${snapshot.num_segments}  SOM dims: ${snapshot.som_rows} x ${snapshot.som_cols}`;
    }
    $('error').textContent = state.lastError ? `${state.lastError.code}: ${state.lastError.message}` : '';
    const blink = $('blink');
    blink.classList.toggle('on', state.oneShotBlink % 2 === 1);
}

function renderGrid(): void {
    const canvas = document.getElementById('som') as HTMLCanvasElement;
    const context = canvas.getContext('2d');
    if (!context || !state.grid) {
        return;
    }
    const { values, rows, cols } = state.grid;
    const cell = Math.min(canvas.width / cols, canvas.height / rows);
    context.clearRect(0, 0, canvas.width, canvas.height);
    for (const c of somGridCells(values, state.currentNode, state.previousNode)) {
        context.fillStyle = c.fill;
        context.fillRect(c.col * cell, c.row * cell, cell - 2, cell - 2);
        if (c.overlayColor) {
            context.fillStyle = c.overlayColor;
            context.globalAlpha = 0.85;
            context.fillRect(c.col * cell, c.row * cell, cell - 2, cell - 2);
            context.globalAlpha = 1.0;
        }
    }
}

function renderScatter(): void {
    const canvas = document.getElementById('scatter') as HTMLCanvasElement;
    const context = canvas.getContext('2d');
    if (!context) {
        return;
    }
    context.clearRect(0, 0, canvas.width, canvas.height);
    const projected = projectPoints(
        scatterStyles(state.scatter, state.selectedSegment),
        canvas.width,
        canvas.height,
    );
    for (const p of projected) {
        context.beginPath();
        context.globalAlpha = p.opacity;
        context.fillStyle = p.color;
        context.arc(p.px, p.py, p.radius, 0, 2 * Math.PI);
        context.fill();
    }
    context.globalAlpha = 1.0;
}

function renderBark(): void {
    const canvas = document.getElementById('bark') as HTMLCanvasElement;
    const context = canvas.getContext('2d');
    if (!context || !state.bark) {
        return;
    }
    context.clearRect(0, 0, canvas.width, canvas.height);
    const max = Math.max(...state.bark, 1e-9);
    const barWidth = canvas.width / state.bark.length;
    context.fillStyle = '#4fc3f7';
    state.bark.forEach((energy, i) => {
        const h = (energy / max) * canvas.height;
        context.fillRect(i * barWidth, canvas.height - h, barWidth - 1, h);
    });
}

function renderPanel(): void {
    for (const field of ['tempo', 'congruence', 'attack_ms', 'release_ms', 'resample_ratio', 'pitch_shift_cents', 'viz_dim'] as ParamField[]) {
        const input = document.getElementById(`param-${field}`) as HTMLInputElement | null;
        if (input && document.activeElement !== input) {
            input.value = String(state.panel[field]);
        }
    }
    for (const field of ['reverse', 'one_shot', 'tempo_lock'] as ParamField[]) {
        const input = document.getElementById(`param-${field}`) as HTMLInputElement | null;
        if (input) {
            input.checked = Boolean(state.panel[field]);
        }
    }
    const trigger = document.getElementById('trigger-mode') as HTMLSelectElement | null;
    if (trigger && document.activeElement !== trigger) {
        trigger.value = state.triggerMode;
    }
}

function renderAll(): void {
    renderStatus();
    renderGrid();
    renderScatter();
    renderBark();
}

// ------------------------------------------------------------------ wire-up

function bindPanel(): void {
    const numeric: ParamField[] = ['tempo', 'congruence', 'attack_ms', 'release_ms', 'resample_ratio', 'pitch_shift_cents', 'viz_dim'];
    for (const field of numeric) {
        const input = document.getElementById(`param-${field}`) as HTMLInputElement | null;
        input?.addEventListener('input', () => dispatcher.editParam(field, Number(input.value) as never));
    }
    const flags: ParamField[] = ['reverse', 'one_shot', 'tempo_lock'];
    for (const field of flags) {
        const input = document.getElementById(`param-${field}`) as HTMLInputElement | null;
        input?.addEventListener('change', () => dispatcher.editParam(field, input.checked as never));
    }
    (document.getElementById('trigger-mode') as HTMLSelectElement | null)?.addEventListener('change', (ev) =>
        dispatcher.setTriggerMode((ev.target as HTMLSelectElement).value as TriggerMode),
    );
    const requestScatter = () => {
        const x = (document.getElementById('axis-x') as HTMLSelectElement).value;
        const y = (document.getElementById('axis-y') as HTMLSelectElement).value;
        requests.request('query_scatter', { x, y }, (r) => {
            if (r.ok && r.result) {
                state = setScatter(state, (r.result as { points: ScatterPoint[] }).points);
                renderScatter();
            }
        });
    };
    document.getElementById('axis-x')?.addEventListener('change', requestScatter);
    document.getElementById('axis-y')?.addEventListener('change', requestScatter);
    $('btn-start').addEventListener('click', () => requests.request('start'));
    $('btn-stop').addEventListener('click', () => requests.request('stop'));
    $('btn-restart').addEventListener('click', () => requests.request('restart'));
    $('btn-mute').addEventListener('click', () => requests.request('mute', { on: true }));
    $('btn-connect').addEventListener('click', connect);

    const replayInput = document.getElementById('replay-file') as HTMLInputElement;
    replayInput.addEventListener('change', async () => {
        const file = replayInput.files?.[0];
        if (!file) {
            return;
        }
        const text = await file.text();
        state = setConnection(initialState(), 'replay');
        for (const step of replayStepwise(text)) {
            state = step.state;
        }
        renderAll();
        renderPanel();
    });
}

document.addEventListener('DOMContentLoaded', () => {
    bindPanel();
    renderAll();
    renderPanel();
});
