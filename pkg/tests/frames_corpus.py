"""Hand-built malformed wire frames and the error class each must raise."""

import base64

from webfed.errors import CodecError, ParseError, ProtocolError, SchemaError

_UUID = "1b4e28ba-2fa1-11d2-883f-0016d3cca427"
_B64_3_FLOATS = base64.b64encode(b"\x00" * 12).decode()  # 3 float32 words
_B64_NAN = base64.b64encode(b"\x00\x00\xc0\x7f").decode()  # quiet NaN

MALFORMED_FRAMES = [
    # (label, frame, expected error class)
    ("not JSON at all", "{{{", ParseError),
    ("truncated JSON", '{"type": "register"', ParseError),
    ("JSON but not an object", "[1,2,3]", SchemaError),
    ("missing type tag", '{"round": 1}', SchemaError),
    ("unknown type tag", '{"type":"bogus"}', ProtocolError),
    (
        "wrong protocol version",
        f'{{"type":"register","client_id":"{_UUID}","num_samples":5,"protocol":"webfed/0"}}',
        ProtocolError,
    ),
    (
        "register missing num_samples",
        f'{{"type":"register","client_id":"{_UUID}","protocol":"webfed/1"}}',
        SchemaError,
    ),
    (
        "register with negative num_samples",
        f'{{"type":"register","client_id":"{_UUID}","num_samples":-3,"protocol":"webfed/1"}}',
        SchemaError,
    ),
    (
        "register with non-UUID client_id",
        '{"type":"register","client_id":"not-a-uuid","num_samples":5,"protocol":"webfed/1"}',
        SchemaError,
    ),
    (
        "tensor payload length mismatch vs shape",
        '{"type":"global_model","round":1,"selected":true,"weights":'
        f'[{{"name":"t","shape":[2,2],"data":"{_B64_3_FLOATS}"}}]}}',
        CodecError,
    ),
    (
        "tensor payload not base64",
        '{"type":"global_model","round":1,"selected":true,"weights":'
        '[{"name":"t","shape":[1],"data":"@@@@"}]}',
        CodecError,
    ),
    (
        "tensor payload smuggles NaN",
        '{"type":"local_update","round":1,"client_id":"' + _UUID + '","num_samples":4,'
        '"weights":[{"name":"t","shape":[1],"data":"' + _B64_NAN + '"}]}',
        CodecError,
    ),
]
