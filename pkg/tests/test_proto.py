"""Wire codec: round-trip identity, schema validation, malformed frames."""

import json
import uuid

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from webfed import nn, proto
from webfed.errors import CodecError, ProtocolError, SchemaError
from webfed.ldp import PrivacyParams

from frames_corpus import MALFORMED_FRAMES

SPEC = nn.model_spec()

TASK = proto.TaskConfig(
    architecture_id=nn.LENET_V1,
    hyper=proto.HyperParams(eta=0.05, local_epochs=1, batch_size=32, seed=99),
    privacy=PrivacyParams(epsilon=3.0, clip=1.0),
    rounds_total=5,
    clients_per_round=2,
)


def assert_msg_equal(a, b):
    assert type(a) is type(b)
    if isinstance(a, (proto.GlobalModel, proto.LocalUpdate)):
        assert a.weights.bit_equal(b.weights)
        for field in ("round", "selected", "client_id", "num_samples"):
            if hasattr(a, field):
                assert getattr(a, field) == getattr(b, field)
    else:
        assert a == b


# -- hypothesis strategies ---------------------------------------------------

f32 = st.floats(width=32, allow_nan=False, allow_infinity=False)


@st.composite
def bundles(draw):
    n_tensors = draw(st.integers(1, 4))
    tensors = []
    for i in range(n_tensors):
        shape = tuple(draw(st.lists(st.integers(1, 4), min_size=1, max_size=3)))
        count = int(np.prod(shape))
        vals = draw(st.lists(f32, min_size=count, max_size=count))
        tensors.append((f"t{i}", np.array(vals, np.float32).reshape(shape)))
    return nn.WeightsBundle(tensors)


@st.composite
def messages(draw):
    kind = draw(st.sampled_from(["register", "ack", "global", "update", "metrics", "shutdown"]))
    cid = str(uuid.UUID(int=draw(st.integers(0, 2**128 - 1))))
    if kind == "register":
        return proto.Register(client_id=cid, num_samples=draw(st.integers(0, 2**40)))
    if kind == "ack":
        return proto.RegisterAck(client_index=draw(st.integers(0, 1000)), task=TASK)
    if kind == "global":
        return proto.GlobalModel(
            round=draw(st.integers(0, 10**6)), selected=draw(st.booleans()),
            weights=draw(bundles()),
        )
    if kind == "update":
        return proto.LocalUpdate(
            round=draw(st.integers(0, 10**6)), client_id=cid,
            num_samples=draw(st.integers(0, 2**40)), weights=draw(bundles()),
        )
    if kind == "metrics":
        return proto.RoundMetrics(
            round=draw(st.integers(0, 10**6)),
            accuracy=draw(st.floats(0, 1)), loss=draw(f32),
        )
    return proto.Shutdown()


class TestEncode:
    def test_shutdown_frame(self):
        assert proto.encode(proto.Shutdown()) == '{"type":"shutdown"}'

    def test_zero_samples_encodable(self):
        # validity of num_samples is the server's concern, not the codec's
        cid = str(uuid.uuid4())
        frame = proto.encode(proto.Register(client_id=cid, num_samples=0))
        assert json.loads(frame)["num_samples"] == 0

    def test_nan_bundle_refused(self):
        w = nn.WeightsBundle([("t", np.array([1.0, np.nan], np.float32))])
        with pytest.raises(CodecError):
            proto.encode(proto.GlobalModel(round=1, selected=True, weights=w))

    def test_inf_bundle_refused(self):
        w = nn.WeightsBundle([("t", np.array([np.inf], np.float32))])
        with pytest.raises(CodecError):
            proto.encode(proto.GlobalModel(round=1, selected=True, weights=w))

    def test_lenet_frame_under_64kb(self):
        w = nn.init_weights(SPEC, 0)
        frame = proto.encode(proto.GlobalModel(round=1, selected=True, weights=w))
        assert len(frame.encode()) < 64 * 1024


class TestDecode:
    def test_unknown_type_names_offender(self):
        with pytest.raises(ProtocolError, match="bogus"):
            proto.decode('{"type":"bogus"}')

    def test_version_mismatch_is_hard_error(self):
        cid = str(uuid.uuid4())
        frame = json.dumps(
            {"type": "register", "client_id": cid, "num_samples": 1, "protocol": "webfed/2"}
        )
        with pytest.raises(ProtocolError, match="version"):
            proto.decode(frame)

    def test_missing_field_names_it(self):
        with pytest.raises(SchemaError, match="selected"):
            proto.decode('{"type":"global_model","round":1,"weights":[]}')

    def test_malformed_frame_corpus(self):
        assert len(MALFORMED_FRAMES) == 12
        for label, frame, expected in MALFORMED_FRAMES:
            with pytest.raises(expected):
                proto.decode(frame)
                pytest.fail(f"frame {label!r} decoded without error")

    def test_bytes_frames_accepted(self):
        msg = proto.decode(b'{"type":"shutdown"}')
        assert isinstance(msg, proto.Shutdown)


class TestRoundTrip:
    @given(messages())
    @settings(max_examples=300, deadline=None)
    def test_encode_decode_identity(self, msg):
        assert_msg_equal(proto.decode(proto.encode(msg)), msg)

    def test_lenet_bundle_bit_exact_with_adversarial_floats(self):
        # negative zero and subnormals must survive the codec untouched
        vec = nn.init_weights(SPEC, 1).to_vector()
        vec[0] = np.float32(-0.0)
        vec[1] = np.float32(1e-44)  # subnormal
        vec[2] = np.float32(-1.4e-45)  # smallest negative subnormal
        w = nn.WeightsBundle.from_vector(SPEC, vec)
        msg = proto.LocalUpdate(round=3, client_id=str(uuid.uuid4()), num_samples=10, weights=w)
        out = proto.decode(proto.encode(msg))
        assert out.weights.bit_equal(w)
        # sign of zero is preserved bit-for-bit
        assert np.signbit(out.weights.tensor("conv1.w").ravel()[0])

    def test_task_config_round_trip(self):
        for eps in (3.0, None):
            task = proto.TaskConfig(
                architecture_id=nn.LENET_V1,
                hyper=proto.HyperParams(eta=0.1, local_epochs=2, batch_size=16, seed=7),
                privacy=PrivacyParams(epsilon=eps, clip=0.5),
                rounds_total=10,
                clients_per_round=3,
            )
            msg = proto.RegisterAck(client_index=4, task=task)
            assert proto.decode(proto.encode(msg)) == msg


class TestTaskValidation:
    def test_unknown_architecture_rejected(self):
        frame = proto.encode(proto.RegisterAck(client_index=0, task=TASK))
        bad = frame.replace(nn.LENET_V1, "alexnet-imagenet-v1")
        with pytest.raises(SchemaError):
            proto.decode(bad)

    def test_bad_epsilon_rejected(self):
        frame = proto.encode(proto.RegisterAck(client_index=0, task=TASK))
        bad = frame.replace('"epsilon":3.0', '"epsilon":-1.0')
        with pytest.raises(SchemaError):
            proto.decode(bad)
