#!/usr/bin/env python3
"""Generate conformance/golden_vectors.json.

The committed file is the source of truth; regeneration is only needed when
the vector set itself changes. Image octets are produced by the local codec
at generation time and frozen into the file.
"""

import json
import math
import struct
from pathlib import Path

import numpy as np

from policyserve.conformance import FORMAT_NAME, FORMAT_VERSION, value_to_jsonable
from policyserve.fixtures import make_gradient
from policyserve.protocol.frame import Frame, MsgType, encode_frame
from policyserve.protocol.image import compress_image
from policyserve.protocol.messages import Act, Obs, encode_act, encode_obs
from policyserve.protocol.value import CompressedImage, encode_value

OUT = Path(__file__).resolve().parents[1] / "conformance" / "golden_vectors.json"

NAN_BITS = struct.unpack("<d", bytes.fromhex("000000000000f87f"))[0]  # quiet NaN


def value_vectors():
    tiny = make_gradient(16)
    jpeg_octets = compress_image(tiny, quality=90)
    vectors = [
        ("null", None),
        ("bool_true", True),
        ("bool_false", False),
        ("int_zero", 0),
        ("int_five", 5),
        ("int_minus_one", -1),
        ("int_min", -(1 << 63)),
        ("int_max", (1 << 63) - 1),
        ("real_zero", 0.0),
        ("real_negative_zero", -0.0),
        ("real_pi", math.pi),
        ("real_inf", math.inf),
        ("real_negative_inf", -math.inf),
        ("real_nan", NAN_BITS),
        ("string_empty", ""),
        ("string_ascii", "hello"),
        ("string_unicode", "héllo → 🤖"),
        ("bytes_empty", b""),
        ("bytes_small", bytes([0x00, 0x01, 0x6A, 0xFF])),
        ("list_empty", []),
        ("list_mixed", [None, True, 7, 0.5, "x", b"\xff", [1, 2], {"k": "v"}]),
        ("map_empty", {}),
        ("map_sorting", {"zeta": 1, "alpha": 2, "mid": 3}),
        ("map_nested", {"outer": {"b": [1, 2.5], "a": None}, "n": -9}),
        ("array_u8_2x3", np.arange(6, dtype=np.uint8).reshape(2, 3)),
        ("array_i64", np.array([-5, 2**40], dtype=np.int64)),
        ("array_f32_2x2", np.array([[0.5, -1.25], [3.0, 65504.0]], dtype=np.float32)),
        ("array_f64", np.array([math.pi, -0.0, 1e300], dtype=np.float64)),
        ("array_empty_dim", np.zeros((0, 4), dtype=np.uint8)),
        ("array_8d", np.arange(2 ** 8, dtype=np.uint8).reshape((2,) * 8)),
        ("image_jpeg", CompressedImage("jpeg", jpeg_octets)),
        ("image_png_stub", CompressedImage("png", bytes.fromhex("89504e470d0a1a0a"))),
        ("obs_like", encode_obs(Obs(
            cameras={"wrist": np.arange(48, dtype=np.uint8).reshape(4, 4, 3)},
            gripper=0.5,
            info={"step": 3, "note": "fixture"}), None)),
        ("act_like", encode_act(Act(
            action=np.array([0.1, -0.2, 0.3], dtype=np.float32),
            done=False,
            info={"score": 0.9}))),
    ]
    out = []
    for name, value in vectors:
        out.append({
            "name": name,
            "encoded_hex": encode_value(value).hex(),
            "value": value_to_jsonable(value),
        })
    return out


def frame_vectors():
    act_payload = encode_value(encode_obs(Obs(
        cameras={"cam0": np.arange(27, dtype=np.uint8).reshape(3, 3, 3)},
        gripper=0.25, info={}), None))
    act_ack_payload = encode_value(encode_act(Act(
        action=np.zeros(7, dtype=np.float32), done=False, info={})))
    frames = [
        ("ping_empty", Frame(MsgType.PING, 7, b"")),
        ("hello", Frame(MsgType.HELLO, 1, encode_value({"proto_version": 1}))),
        ("initialize", Frame(MsgType.INITIALIZE, 2, encode_value(None))),
        ("act_small_obs", Frame(MsgType.ACT, 3, act_payload)),
        ("act_ack", Frame(MsgType.ACT_ACK, 3, act_ack_payload)),
        ("act_batched_flag", Frame(MsgType.ACT, 2 ** 40, act_payload, flags=0x0001)),
        ("act_compressed_flag", Frame(MsgType.ACT, 11, encode_value(
            {"cameras": {"c": CompressedImage("jpeg", b"\xff\xd8\xff\xd9")},
             "gripper": None, "info": {}}), flags=0x0002)),
        ("error", Frame(MsgType.ERROR, 9, encode_value(
            {"code": "bad_phase", "message": "not allowed"}))),
        ("close", Frame(MsgType.CLOSE, 12, b"")),
        ("reset", Frame(MsgType.RESET, 4, encode_value(
            {"obs": encode_obs(Obs(), None), "instruction": "pick up the cube",
             "kwargs": {}}))),
    ]
    out = []
    for name, f in frames:
        out.append({
            "name": name,
            "frame_hex": encode_frame(f).hex(),
            "msg_type": int(f.msg_type),
            "flags": f.flags,
            "request_id": f.request_id,
            "payload_hex": f.payload.hex(),
        })
    return out


def main():
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "description": (
            "Golden conformance vectors for the policy-serving wire format. "
            "Every implementation must decode each vector to the stated "
            "value/fields and re-encode it to identical octets. See "
            "src/policyserve/conformance.py for the typed JSON value form."),
        "value_vectors": value_vectors(),
        "frame_vectors": frame_vectors(),
    }
    OUT.parent.mkdir(exist_ok=True)
    OUT.write_text(json.dumps(doc, indent=1, ensure_ascii=False) + "\n")
    print(f"wrote {OUT} ({OUT.stat().st_size} bytes, "
          f"{len(doc['value_vectors'])} value vectors, "
          f"{len(doc['frame_vectors'])} frame vectors)")


if __name__ == "__main__":
    main()
