"""Control protocol: message validation, dispatch and the wire servers.

Wire format is newline-delimited JSON, carried over plain TCP (headless
tests) or a WebSocket (the console UI); both speak the same schema, which is
documented in PROTOCOL.md and versioned "v": 1 in every message. All
state-changing operations are funneled through the engine's ordered control
queue and acknowledged after enqueue; the render path picks them up at the
next block boundary.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import json
import os
import threading
from dataclasses import dataclass, field

import numpy as np

from .engine import EVENT_KINDS, Engine, Subscription
from .errors import CorpusAgentError, ValidationError
from .features import IDX as FRAME_IDX
from .model import MOSAIC_DIMS, TrainedModel, load_model
from .mosaic import FeatureWeights
from .synth import RESERVED_TRIGGER_MODES, TRIGGER_MODES

PROTOCOL_VERSION = 1
AUTH_ENV_VAR = "CORPUS_AGENT_TOKEN"

OPS = (
    "auth",
    "load_model",
    "start",
    "stop",
    "restart",
    "mute",
    "set_mode",
    "set_param",
    "set_weights",
    "set_trigger_mode",
    "subscribe",
    "query_state",
    "query_scatter",
)

# column names into the raw 35-dim descriptor space (31 vector dims + aux)
FEATURE_COLUMNS: dict[str, int] = {}
for _name, _idx in FRAME_IDX.items():
    if _idx < 22:
        FEATURE_COLUMNS[_name] = _idx  # the 22 mean dims share frame order
for _j, _name in enumerate(
    ("loudness_std", "mfcc_1_std", "mfcc_3_std", "mfcc_5_std", "mfcc_11_std",
     "spectral_decrease_std", "tristimulus_2_std")
):
    FEATURE_COLUMNS[_name] = 22 + _j
FEATURE_COLUMNS.update(
    valence=29, arousal=30, centroid_mean=31, periodicity_mean=32,
    f0_mean=33, frequency_mean=33, duration=34,
)
FEATURE_COLUMNS["centroid"] = 31
FEATURE_COLUMNS["periodicity"] = 32
FEATURE_COLUMNS["f0"] = 33


def scatter_data(
    model: TrainedModel,
    x_feature: str = "centroid_mean",
    y_feature: str = "periodicity_mean",
) -> list[dict]:
    """One scatter point per segment: chosen x/y plus opacity (frequency mean)
    and size (duration), both min-max scaled; degenerate ranges sit mid-scale."""
    def column(name: str) -> np.ndarray:
        idx = FEATURE_COLUMNS.get(name)
        if idx is None:
            raise ValidationError("axis", f"unknown feature {name!r}",
                                  permitted=", ".join(sorted(FEATURE_COLUMNS)))
        raw = np.hstack([model.feature_matrix.astype(np.float64), model.aux_matrix])
        return raw[:, idx]

    def scaled(values: np.ndarray) -> np.ndarray:
        lo, hi = float(values.min()), float(values.max())
        if hi - lo <= 1e-12:
            return np.full(len(values), 0.5)
        return (values - lo) / (hi - lo)

    xs = column(x_feature)
    ys = column(y_feature)
    opacity = scaled(column("frequency_mean"))
    size = scaled(column("duration"))
    return [
        {
            "segment": seg.id,
            "x": float(xs[i]),
            "y": float(ys[i]),
            "opacity": float(opacity[i]),
            "size": float(size[i]),
        }
        for i, seg in enumerate(model.segments)
    ]


def _require(args: dict, key: str):
    if key not in args:
        raise ValidationError(key, f"missing required argument {key!r}")
    return args[key]


def _as_number(field_name: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(field_name, f"{field_name} must be a number")
    return float(value)


def _as_bool(field_name: str, value) -> bool:
    if not isinstance(value, bool):
        raise ValidationError(field_name, f"{field_name} must be a boolean")
    return value


PARAM_VALIDATORS = {}


def _param(name):
    def register(fn):
        PARAM_VALIDATORS[name] = fn
        return fn
    return register


@_param("tempo")
def _v_tempo(value):
    v = _as_number("tempo", value)
    if v <= 0:
        raise ValidationError("tempo", "tempo must be > 0", permitted="> 0")
    return ("tempo", v)


@_param("congruence")
def _v_congruence(value):
    v = _as_number("congruence", value)
    if not 0.0 <= v <= 1.0:
        raise ValidationError("congruence", "congruence must lie in [0, 1]", permitted="[0, 1]")
    return ("p_forward", v)


@_param("forward_jump")
def _v_forward_jump(value):
    # the console expresses this as a percentage; 100 -> p_forward 1.0
    v = _as_number("forward_jump", value)
    if not 0.0 <= v <= 100.0:
        raise ValidationError("forward_jump", "forward_jump must lie in [0, 100]",
                              permitted="[0, 100]")
    return ("p_forward", v / 100.0)


@_param("attack_ms")
def _v_attack(value):
    v = _as_number("attack_ms", value)
    if v < 0:
        raise ValidationError("attack_ms", "attack_ms must be >= 0", permitted=">= 0")
    return ("attack_ms", v)


@_param("release_ms")
def _v_release(value):
    v = _as_number("release_ms", value)
    if v < 0:
        raise ValidationError("release_ms", "release_ms must be >= 0", permitted=">= 0")
    return ("release_ms", v)


@_param("reverse")
def _v_reverse(value):
    return ("reverse", _as_bool("reverse", value))


@_param("resample_ratio")
def _v_resample(value):
    v = _as_number("resample_ratio", value)
    if v <= 0:
        raise ValidationError("resample_ratio", "resample_ratio must be > 0", permitted="> 0")
    return ("resample_ratio", v)


@_param("pitch_shift_cents")
def _v_pitch(value):
    return ("pitch_shift_cents", _as_number("pitch_shift_cents", value))


@_param("one_shot")
def _v_one_shot(value):
    return ("one_shot", _as_bool("one_shot", value))


@_param("tempo_lock")
def _v_tempo_lock(value):
    return ("tempo_lock", _as_bool("tempo_lock", value))


@_param("viz_dim")
def _v_viz_dim(value):
    v = _as_number("viz_dim", value)
    if v != int(v) or not 0 <= int(v) < 31:
        raise ValidationError("viz_dim", "viz_dim must be an integer in [0, 30]",
                              permitted="[0, 30]")
    return ("viz_dim", int(v))


@dataclass
class Session:
    """One protocol connection: authentication plus its event subscription."""

    host: "EngineHost"
    authed: bool = False
    subscription: Subscription | None = None
    closed: bool = False

    def __post_init__(self):
        self.authed = self.host.auth_token is None


class EngineHost:
    """Owns the engine and its stepping thread; sessions mutate through it."""

    def __init__(self, *, clock: str = "offline", seed: int = 0, mode: str = "macat",
                 auth_token: str | None = None, engine: Engine | None = None,
                 run_limit_seconds: float | None = None, auto_loop: bool = False):
        if clock not in ("offline", "device"):
            raise ValidationError("clock", "clock must be 'offline' or 'device'",
                                  permitted="offline, device")
        self.clock = clock
        self.seed = seed
        self.mode = mode
        self.auth_token = auth_token if auth_token is not None else os.environ.get(AUTH_ENV_VAR)
        self.engine = engine
        self.run_limit_seconds = run_limit_seconds
        self.auto_loop = auto_loop  # servers step the engine in a thread; tests step manually
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()
        self._lock = threading.Lock()

    def load(self, directory: str) -> Engine:
        model = load_model(directory)
        with self._lock:
            self.stop_loop()
            self.engine = Engine(model, mode=self.mode, seed=self.seed, running=False)
            if self.auto_loop:
                self.start_loop()
        return self.engine

    def require_engine(self) -> Engine:
        if self.engine is None:
            raise CorpusAgentError("no model loaded", code="no-model")
        return self.engine

    def start_loop(self) -> None:
        if self.engine is None or (self._thread is not None and self._thread.is_alive()):
            return
        self._stop.clear()
        limit_blocks = None
        if self.run_limit_seconds is not None:
            from .engine import BLOCK, SAMPLE_RATE
            limit_blocks = int(np.ceil(self.run_limit_seconds * SAMPLE_RATE / BLOCK))

        def loop():
            import time as _time
            from .engine import BLOCK_SECONDS
            start = _time.monotonic()
            n = 0
            while not self._stop.is_set():
                if not self.engine.running:
                    # idle until started; the budget counts running time only
                    self.engine.apply_pending_controls()
                    _time.sleep(0.001)
                    start = _time.monotonic() - n * BLOCK_SECONDS
                    continue
                self.engine.render_block()
                n += 1
                if limit_blocks is not None and n >= limit_blocks:
                    break
                if self.clock == "device":
                    target = start + n * BLOCK_SECONDS
                    delay = target - _time.monotonic()
                    if delay > 0:
                        _time.sleep(delay)

        self._thread = threading.Thread(target=loop, daemon=True, name="engine-loop")
        self._thread.start()

    def stop_loop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None


def _ok(request_id, result=None) -> dict:
    response = {"v": PROTOCOL_VERSION, "id": request_id, "ok": True}
    if result is not None:
        response["result"] = result
    return response


def _err(request_id, payload: dict) -> dict:
    return {"v": PROTOCOL_VERSION, "id": request_id, "ok": False, "error": payload}


def handle_message(session: Session, msg: dict) -> dict:
    """Validate and dispatch one request; always returns exactly one response."""
    request_id = msg.get("id")
    try:
        version = msg.get("v", PROTOCOL_VERSION)
        if version != PROTOCOL_VERSION:
            raise ValidationError("v", f"unsupported protocol version {version!r}",
                                  permitted=str(PROTOCOL_VERSION))
        op = msg.get("op")
        if op not in OPS:
            raise ValidationError("op", f"unknown op {op!r}", permitted=", ".join(OPS))
        args = msg.get("args") or {}
        if not isinstance(args, dict):
            raise ValidationError("args", "args must be an object")

        if op == "auth":
            token = _require(args, "token")
            if session.host.auth_token is not None and token != session.host.auth_token:
                raise ValidationError("token", "invalid token")
            session.authed = True
            return _ok(request_id, {"authed": True})

        if not session.authed:
            return _err(request_id, {"code": "unauthorized",
                                     "message": "authenticate first (op 'auth')"})

        return _dispatch(session, op, args, request_id)
    except ValidationError as exc:
        return _err(request_id, exc.as_payload())
    except CorpusAgentError as exc:
        return _err(request_id, {"code": exc.code, "message": str(exc)})


def _dispatch(session: Session, op: str, args: dict, request_id) -> dict:
    host = session.host

    if op == "load_model":
        directory = _require(args, "dir")
        engine = host.load(str(directory))
        return _ok(request_id, {
            "num_segments": engine.model.num_segments,
            "som_rows": engine.model.som.rows,
            "som_cols": engine.model.som.cols,
        })

    engine = host.require_engine()

    if op == "start":
        engine.enqueue_control(_set_running(True))
        return _ok(request_id)
    if op == "stop":
        engine.enqueue_control(_set_running(False))
        return _ok(request_id)
    if op == "restart":
        engine.enqueue_control(lambda e: e.restart())
        return _ok(request_id)
    if op == "mute":
        on = _as_bool("on", _require(args, "on"))
        engine.enqueue_control(_set_muted(on))
        return _ok(request_id)

    if op == "set_mode":
        mode = _require(args, "mode")
        if mode not in ("macat", "proactive", "reactive"):
            raise ValidationError("mode", f"unknown mode {mode!r}",
                                  permitted="macat, proactive, reactive")
        engine.enqueue_control(_set_mode(mode))
        return _ok(request_id)

    if op == "set_param":
        if not args:
            raise ValidationError("args", "set_param needs at least one parameter")
        changes = []
        for key, value in args.items():
            validator = PARAM_VALIDATORS.get(key)
            if validator is None:
                raise ValidationError(key, f"unknown parameter {key!r}",
                                      permitted=", ".join(sorted(PARAM_VALIDATORS)))
            changes.append(validator(value))
        engine.enqueue_control(_set_params(changes))
        return _ok(request_id, {"applied": {k: v for k, v in changes}})

    if op == "set_weights":
        if "preset" in args:
            weights = FeatureWeights.preset(str(args["preset"]))
        else:
            raw = _require(args, "weights")
            if not isinstance(raw, list) or len(raw) != MOSAIC_DIMS:
                raise ValidationError("weights", f"weights must be a list of {MOSAIC_DIMS} numbers")
            weights = FeatureWeights(np.asarray(raw, dtype=np.float64))
        weights.require_active()
        engine.enqueue_control(_set_weights(weights))
        return _ok(request_id)

    if op == "set_trigger_mode":
        mode = _require(args, "mode")
        if mode in RESERVED_TRIGGER_MODES:
            raise ValidationError("trigger_mode",
                                  f"trigger mode {mode!r} is reserved and not implemented",
                                  permitted=", ".join(TRIGGER_MODES))
        if mode not in TRIGGER_MODES:
            raise ValidationError("trigger_mode", f"unknown trigger mode {mode!r}",
                                  permitted=", ".join(TRIGGER_MODES))
        engine.enqueue_control(_set_trigger_mode(mode))
        return _ok(request_id)

    if op == "subscribe":
        kinds = args.get("kinds") or list(EVENT_KINDS)
        if not isinstance(kinds, list):
            raise ValidationError("kinds", "kinds must be a list of event kinds")
        if session.subscription is not None:
            session.subscription.close()
        session.subscription = engine.subscribe(kinds, maxsize=int(args.get("buffer", 256)))
        return _ok(request_id, {"kinds": sorted(session.subscription.kinds)})

    if op == "query_state":
        return _ok(request_id, engine.snapshot())

    if op == "query_scatter":
        points = scatter_data(
            engine.model,
            x_feature=str(args.get("x", "centroid_mean")),
            y_feature=str(args.get("y", "periodicity_mean")),
        )
        return _ok(request_id, {
            "x": str(args.get("x", "centroid_mean")),
            "y": str(args.get("y", "periodicity_mean")),
            "points": points,
        })

    raise ValidationError("op", f"unknown op {op!r}", permitted=", ".join(OPS))


def _set_running(on: bool):
    def apply(engine: Engine):
        engine.running = on
    return apply


def _set_muted(on: bool):
    def apply(engine: Engine):
        engine.muted = on
    return apply


def _set_mode(mode: str):
    def apply(engine: Engine):
        engine.state.mode = mode
    return apply


def _set_params(changes: list[tuple[str, object]]):
    def apply(engine: Engine):
        for key, value in changes:
            if key == "viz_dim":
                engine.viz_dim = value
            else:
                setattr(engine.state.params, key, value)
    return apply


def _set_weights(weights: FeatureWeights):
    def apply(engine: Engine):
        engine.state.weights = weights
    return apply


def _set_trigger_mode(mode: str):
    def apply(engine: Engine):
        engine.state.trigger_mode = mode
    return apply


# --------------------------------------------------------------------- wire


def encode_message(payload: dict) -> bytes:
    return (json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


async def _pump_events(session: Session, send_text) -> None:
    """Forward subscription events to a connection until it closes."""
    try:
        while not session.closed:
            sub = session.subscription
            if sub is not None:
                for event in sub.drain():
                    await send_text(encode_message(event.as_dict()))
            await asyncio.sleep(0.01)
    except (ConnectionError, asyncio.CancelledError):
        pass


async def _serve_tcp_connection(host: EngineHost, reader: asyncio.StreamReader,
                                writer: asyncio.StreamWriter,
                                first_line: bytes = b"") -> None:
    session = Session(host=host)

    async def send(data: bytes):
        writer.write(data)
        await writer.drain()

    async def process(line: bytes):
        line = line.strip()
        if not line:
            return
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            await send(encode_message(_err(None, {"code": "bad-json",
                                                  "message": "request is not valid JSON"})))
            return
        await send(encode_message(handle_message(session, msg)))

    pump = asyncio.create_task(_pump_events(session, send))
    try:
        if first_line:
            await process(first_line)
        while True:
            line = await reader.readline()
            if not line:
                break
            await process(line)
    except ConnectionError:
        pass
    finally:
        session.closed = True
        if session.subscription is not None:
            session.subscription.close()
        pump.cancel()
        writer.close()


WS_MAGIC = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


def _ws_accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + WS_MAGIC).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def ws_encode_text(payload: bytes) -> bytes:
    """Server-to-client text frame (FIN set, unmasked)."""
    length = len(payload)
    if length < 126:
        header = bytes([0x81, length])
    elif length < 1 << 16:
        header = bytes([0x81, 126]) + length.to_bytes(2, "big")
    else:
        header = bytes([0x81, 127]) + length.to_bytes(8, "big")
    return header + payload


async def _ws_read_frame(reader: asyncio.StreamReader):
    head = await reader.readexactly(2)
    fin = bool(head[0] & 0x80)
    opcode = head[0] & 0x0F
    masked = bool(head[1] & 0x80)
    length = head[1] & 0x7F
    if length == 126:
        length = int.from_bytes(await reader.readexactly(2), "big")
    elif length == 127:
        length = int.from_bytes(await reader.readexactly(8), "big")
    mask = await reader.readexactly(4) if masked else b"\x00" * 4
    payload = bytearray(await reader.readexactly(length))
    if masked:
        for i in range(length):
            payload[i] ^= mask[i % 4]
    return fin, opcode, bytes(payload)


async def _serve_ws_connection(host: EngineHost, reader: asyncio.StreamReader,
                               writer: asyncio.StreamWriter, request_head: bytes) -> None:
    headers = {}
    for raw in request_head.split(b"\r\n")[1:]:
        if b":" in raw:
            name, _, value = raw.partition(b":")
            headers[name.strip().lower().decode("latin-1")] = value.strip().decode("latin-1")
    key = headers.get("sec-websocket-key")
    if key is None or "websocket" not in headers.get("upgrade", "").lower():
        writer.write(b"HTTP/1.1 400 Bad Request\r\nConnection: close\r\n\r\n")
        await writer.drain()
        writer.close()
        return
    writer.write(
        b"HTTP/1.1 101 Switching Protocols\r\n"
        b"Upgrade: websocket\r\nConnection: Upgrade\r\n"
        b"Sec-WebSocket-Accept: " + _ws_accept_key(key).encode("ascii") + b"\r\n\r\n"
    )
    await writer.drain()

    session = Session(host=host)

    async def send(data: bytes):
        writer.write(ws_encode_text(data.rstrip(b"\n")))
        await writer.drain()

    pump = asyncio.create_task(_pump_events(session, send))
    buffer = bytearray()
    try:
        while True:
            fin, opcode, payload = await _ws_read_frame(reader)
            if opcode == 0x8:  # close
                writer.write(bytes([0x88, 0]))
                await writer.drain()
                break
            if opcode == 0x9:  # ping -> pong
                writer.write(bytes([0x8A, len(payload)]) + payload)
                await writer.drain()
                continue
            if opcode in (0x0, 0x1, 0x2):
                buffer.extend(payload)
                if not fin:
                    continue
                text = bytes(buffer)
                buffer.clear()
                for chunk in text.split(b"\n"):
                    chunk = chunk.strip()
                    if not chunk:
                        continue
                    try:
                        msg = json.loads(chunk)
                    except json.JSONDecodeError:
                        await send(encode_message(_err(None, {"code": "bad-json",
                                                              "message": "request is not valid JSON"})))
                        continue
                    await send(encode_message(handle_message(session, msg)))
    except (asyncio.IncompleteReadError, ConnectionError):
        pass
    finally:
        session.closed = True
        if session.subscription is not None:
            session.subscription.close()
        pump.cancel()
        writer.close()


async def _route_connection(host: EngineHost, reader: asyncio.StreamReader,
                            writer: asyncio.StreamWriter) -> None:
    """Sniff the first line: an HTTP GET means WebSocket, else line JSON."""
    try:
        first_line = await reader.readline()
    except ConnectionError:
        writer.close()
        return
    if not first_line:
        writer.close()
        return
    if first_line.startswith(b"GET "):
        head = first_line
        while not head.endswith(b"\r\n\r\n"):
            chunk = await reader.read(1024)
            if not chunk:
                writer.close()
                return
            head += chunk
        await _serve_ws_connection(host, reader, writer, head.split(b"\r\n\r\n")[0])
    else:
        await _serve_tcp_connection(host, reader, writer, first_line=first_line)


async def serve(host: EngineHost, *, port: int, bind: str = "127.0.0.1") -> asyncio.AbstractServer:
    server = await asyncio.start_server(
        lambda r, w: _route_connection(host, r, w), bind, port
    )
    host.auto_loop = True
    host.start_loop()
    return server
