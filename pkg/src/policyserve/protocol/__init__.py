"""Domain types and bit-exact binary encodings for the wire protocol."""

from .frame import (
    DEFAULT_MAX_PAYLOAD,
    FLAG_BATCHED,
    FLAG_COMPRESSED_IMAGES,
    HEADER_SIZE,
    MAGIC,
    TRAILER_SIZE,
    VERSION,
    Frame,
    MsgType,
    crc32,
    decode_frame,
    decode_header,
    encode_frame,
)
from .image import compress_image, decompress_image
from .messages import (
    NO_COMPRESSION,
    Act,
    CompressionPolicy,
    Obs,
    act_equal,
    decode_act,
    decode_obs,
    encode_act,
    encode_obs,
    obs_equal,
    obs_has_compressed_cameras,
)
from .value import (
    CompressedImage,
    Value,
    decode_value,
    encode_into,
    encode_value,
    encoded_size,
    values_equal,
)

__all__ = [
    "DEFAULT_MAX_PAYLOAD",
    "FLAG_BATCHED",
    "FLAG_COMPRESSED_IMAGES",
    "HEADER_SIZE",
    "MAGIC",
    "TRAILER_SIZE",
    "VERSION",
    "Frame",
    "MsgType",
    "crc32",
    "decode_frame",
    "decode_header",
    "encode_frame",
    "compress_image",
    "decompress_image",
    "NO_COMPRESSION",
    "Act",
    "CompressionPolicy",
    "Obs",
    "act_equal",
    "decode_act",
    "decode_obs",
    "encode_act",
    "encode_obs",
    "obs_equal",
    "obs_has_compressed_cameras",
    "CompressedImage",
    "Value",
    "decode_value",
    "encode_into",
    "encode_value",
    "encoded_size",
    "values_equal",
]
