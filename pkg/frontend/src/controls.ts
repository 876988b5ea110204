/**
 * Debounced control dispatch with optimistic edits.
 *
 * Panel changes coalesce for 50 ms before one message leaves; every sent
 * request is tracked so an engine rejection reverts exactly the fields it
 * carried. The engine owns validation: out-of-range input is sent as-is and
 * the panel falls back to the last acknowledged value when refused.
 */

import {
    ControlMessage,
    ParamField,
    ParamValues,
    PROTOCOL_VERSION,
    RequestId,
    Response,
    TriggerMode,
    WeightPreset,
} from './protocol.js';

export const DEBOUNCE_MS = 50;

interface Inflight {
    kind: 'set_param' | 'set_weights' | 'set_trigger_mode';
    fields: ParamField[];
    values: Record<string, unknown>;
}

export interface RevertAction {
    kind: Inflight['kind'];
    fields: ParamField[];
    error: { code: string; field?: string; message: string; permitted?: string };
}

export interface DispatcherHooks {
    /** called when an edit is applied optimistically */
    onOptimistic?: (fields: Partial<ParamValues>) => void;
    /** called when the engine acknowledged a change */
    onCommit?: (fields: ParamField[]) => void;
    /** called when the engine refused a change */
    onRevert?: (action: RevertAction) => void;
}

export class ControlDispatcher {
    private nextId = 1;
    private pendingParams: Partial<ParamValues> = {};
    private pendingTrigger: TriggerMode | null = null;
    private pendingWeights: { weights?: number[]; preset?: WeightPreset } | null = null;
    private timer: ReturnType<typeof setTimeout> | null = null;
    private inflight = new Map<RequestId, Inflight>();

    constructor(
        private readonly send: (msg: ControlMessage) => void,
        private readonly hooks: DispatcherHooks = {},
        private readonly debounceMs: number = DEBOUNCE_MS,
    ) {}

    /** Optimistically stage a parameter edit; sent after the debounce window. */
    editParam<F extends ParamField>(field: F, value: ParamValues[F]): void {
        this.pendingParams[field] = value;
        this.hooks.onOptimistic?.({ [field]: value } as Partial<ParamValues>);
        this.arm();
    }

    setTriggerMode(mode: TriggerMode): void {
        this.pendingTrigger = mode;
        this.arm();
    }

    setWeights(weights: number[]): void {
        this.pendingWeights = { weights: [...weights] };
        this.arm();
    }

    setWeightPreset(preset: WeightPreset): void {
        this.pendingWeights = { preset };
        this.arm();
    }

    /** Fire staged changes now (used on page hide and by tests). */
    flush(): void {
        if (this.timer !== null) {
            clearTimeout(this.timer);
            this.timer = null;
        }
        if (Object.keys(this.pendingParams).length > 0) {
            const args = { ...this.pendingParams } as Record<string, unknown>;
            this.pendingParams = {};
            this.dispatch('set_param', args, Object.keys(args) as ParamField[]);
        }
        if (this.pendingTrigger !== null) {
            const mode = this.pendingTrigger;
            this.pendingTrigger = null;
            this.dispatch('set_trigger_mode', { mode }, []);
        }
        if (this.pendingWeights !== null) {
            const args = { ...this.pendingWeights } as Record<string, unknown>;
            this.pendingWeights = null;
            this.dispatch('set_weights', args, []);
        }
    }

    /** Route an engine response; reverts are reported through the hooks. */
    handleResponse(response: Response): RevertAction | null {
        const info = this.inflight.get(response.id);
        if (!info) {
            return null;
        }
        this.inflight.delete(response.id);
        if (response.ok) {
            this.hooks.onCommit?.(info.fields);
            return null;
        }
        const action: RevertAction = {
            kind: info.kind,
            fields: info.fields,
            error: response.error,
        };
        this.hooks.onRevert?.(action);
        return action;
    }

    get inflightCount(): number {
        return this.inflight.size;
    }

    private arm(): void {
        if (this.timer !== null) {
            clearTimeout(this.timer);
        }
        this.timer = setTimeout(() => {
            this.timer = null;
            this.flush();
        }, this.debounceMs);
    }

    private dispatch(kind: Inflight['kind'], args: Record<string, unknown>, fields: ParamField[]): void {
        const id = this.nextId++;
        this.inflight.set(id, { kind, fields, values: args });
        this.send({ v: PROTOCOL_VERSION, id, op: kind, args });
    }
}

/** One-off (non-debounced) requests: lifecycle, queries, subscriptions. */
export class RequestClient {
    private nextId = 1_000_000;
    private handlers = new Map<RequestId, (response: Response) => void>();

    constructor(private readonly send: (msg: ControlMessage) => void) {}

    request(op: string, args?: Record<string, unknown>, onResponse?: (r: Response) => void): RequestId {
        const id = this.nextId++;
        if (onResponse) {
            this.handlers.set(id, onResponse);
        }
        const msg: ControlMessage = { v: PROTOCOL_VERSION, id, op };
        if (args !== undefined) {
            msg.args = args;
        }
        this.send(msg);
        return id;
    }

    handleResponse(response: Response): boolean {
        const handler = this.handlers.get(response.id);
        if (!handler) {
            return false;
        }
        this.handlers.delete(response.id);
        handler(response);
        return true;
    }
}
