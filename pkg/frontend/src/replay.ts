/**
 * Session record/replay: a JSONL file of engine events drives the console
 * without a live engine. Replay is the determinism contract: the final state
 * is a pure function of the file.
 */

import { EngineEvent, isEvent } from './protocol.js';
import { UiState, applyEvent, initialState, setConnection } from './state.js';

export function parseSessionFile(text: string): EngineEvent[] {
    const events: EngineEvent[] = [];
    for (const line of text.split('\n')) {
        const trimmed = line.trim();
        if (!trimmed) {
            continue;
        }
        const parsed = JSON.parse(trimmed) as Record<string, unknown>;
        if (!isEvent(parsed)) {
            continue; // recorded sessions may interleave responses; skip them
        }
        events.push(parsed as unknown as EngineEvent);
    }
    return events;
}

export function replaySession(text: string, base?: UiState): UiState {
    let state = setConnection(base ?? initialState(), 'replay');
    for (const event of parseSessionFile(text)) {
        state = applyEvent(state, event);
    }
    return state;
}

/** Step-through player for demos: yields the state after each event. */
export function* replayStepwise(text: string): Generator<{ event: EngineEvent; state: UiState }> {
    let state = setConnection(initialState(), 'replay');
    for (const event of parseSessionFile(text)) {
        state = applyEvent(state, event);
        yield { event, state };
    }
}
