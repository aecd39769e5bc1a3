import numpy as np
import pytest

from pcam.checkpoint import FORMAT_VERSION, MAGIC, Checkpoint
from pcam.config import ModelSection, RunConfig, load_config, parse_config_text
from pcam.exceptions import CheckpointError, ConfigError
from pcam.model import PCAMNetwork
from pcam.pipeline import estimator_from_checkpoint


def test_defaults():
    cfg = RunConfig()
    assert cfg.optim.learning_rate == 1e-3 and cfg.optim.weight_decay == 1e-3
    assert cfg.eval.te_max == 0.3 and cfg.eval.re_max_deg == 15.0
    assert cfg.model.n_layers == 2 and cfg.data.n_points == 256
    assert (cfg.train.n_train, cfg.train.n_val, cfg.data.n_test) == (200, 50, 50)
    assert cfg.eval.tau_grid[0] == 0.0 and cfg.eval.tau_grid[-1] == 0.95 and len(cfg.eval.tau_grid) == 20


def test_text_roundtrip():
    cfg = RunConfig()
    cfg.model.channels = (3, 16, 16)
    cfg.eval.tau = 0.35
    assert parse_config_text(cfg.to_text()) == cfg


def test_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\ntrain.epochs = 3\nmodel.k = 16\n")
    cfg = load_config(path, ["train.epochs=5"])
    assert cfg.train.epochs == 5 and cfg.model.k == 16


@pytest.mark.parametrize("line", ["nosection = 1", "model.nope = 1", "bogus.k = 1", "model.k = abc", "just text"])
def test_bad_config_lines(line):
    with pytest.raises(ConfigError):
        parse_config_text(line)


def test_validation():
    with pytest.raises(ConfigError):
        parse_config_text("train.lr_decay_epochs = 8,6")
    with pytest.raises(ConfigError):
        parse_config_text("eval.te_max = 0")
    with pytest.raises(ConfigError):
        load_config("/nonexistent/file.cfg")


def tiny_network(seed=0):
    section = ModelSection(n_layers=1, channels=(3, 4), k=3, conf_width=4, conf_blocks=1, conf_k=3)
    return PCAMNetwork.from_section(section, seed=seed), section


def tiny_checkpoint(seed=0):
    net, section = tiny_network(seed)
    cfg = RunConfig()
    cfg.model = section
    rng = np.random.default_rng(seed)
    params = {n: rng.normal(size=p.shape) for n, p in net.store.params.items()}
    return Checkpoint(params, cfg, epoch=3, tau=0.25)


def test_checkpoint_byte_roundtrip(tmp_path):
    ck = tiny_checkpoint()
    ck.save(tmp_path / "a.ckpt")
    back = Checkpoint.load(tmp_path / "a.ckpt")
    back.save(tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert back.epoch == 3 and back.tau == 0.25 and back.config == ck.config
    for name, arr in ck.params.items():
        assert np.array_equal(back.params[name], arr.astype(np.float32).astype(np.float64))


def test_checkpoint_header_layout(tmp_path):
    raw = tiny_checkpoint().to_bytes()
    assert raw.startswith(MAGIC)
    assert int.from_bytes(raw[len(MAGIC):len(MAGIC) + 4], "little") == FORMAT_VERSION


def test_checkpoint_errors():
    raw = tiny_checkpoint().to_bytes()
    with pytest.raises(CheckpointError, match="magic"):
        Checkpoint.from_bytes(b"XXXX" + raw[4:])
    bumped = raw[:len(MAGIC)] + (FORMAT_VERSION + 1).to_bytes(4, "little") + raw[len(MAGIC) + 4:]
    with pytest.raises(CheckpointError, match="version"):
        Checkpoint.from_bytes(bumped)
    with pytest.raises(CheckpointError, match="truncated"):
        Checkpoint.from_bytes(raw[:-3])
    with pytest.raises(CheckpointError, match="trailing"):
        Checkpoint.from_bytes(raw + b"\0")


def test_missing_and_unknown_parameters():
    net, _ = tiny_network()
    state = net.state_dict()
    name = sorted(state)[0]
    partial = dict(state)
    del partial[name]
    with pytest.raises(CheckpointError, match=f"missing parameters: {name}"):
        net.load_state_dict(partial)
    with pytest.raises(CheckpointError, match="unknown parameters: extra"):
        net.load_state_dict({**state, "extra": np.zeros(1)})
    with pytest.raises(CheckpointError, match="shape mismatch"):
        net.load_state_dict({**state, name: np.zeros((99,))})


def test_estimator_from_checkpoint_loads_weights():
    ck = tiny_checkpoint()
    est = estimator_from_checkpoint(ck)
    assert est.tau_ == 0.25
    for name, p in est.network_.store.params.items():
        assert np.array_equal(p.data, ck.params[name])
