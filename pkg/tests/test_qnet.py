import numpy as np
import pytest

from slopeplan import gridworld, qnet, terrain
from slopeplan.qnet import Architecture, Transition

from gradcheck import fixture, max_relative_errors

# captured from the first verified run; guards against silent numeric drift
GOLDEN_Q = [0.1184348026944854, -0.14058792022106573, 0.026740447851102227, -0.0985715640265446,
            -0.14158866690361005, 0.4701059407879785, 0.11657555362540298, -0.12566489028756087]


def test_canonical_architecture():
    arch = Architecture()
    assert arch.conv_output_hw() == (11, 11)
    assert arch.flatten_dim == 1936
    shapes = arch.block_shapes()
    assert shapes["conv1_w"] == (8, 3, 3, 3)
    assert shapes["conv2_w"] == (16, 8, 3, 3)
    assert shapes["fc1_w"] == (1936, 512)
    assert shapes["fc2_w"] == (512, 256)
    assert shapes["fc3_w"] == (256, 8)
    assert arch.parameter_count() == 1_126_520


def test_stride_changes_flatten_consistently():
    a = Architecture.for_grid(20, 20)
    b = Architecture.for_grid(20, 20, stride=1)
    assert a.flatten_dim == 4 * 4 * 16
    assert b.flatten_dim == 16 * 16 * 16
    assert b.parameter_count() - a.parameter_count() == (b.flatten_dim - a.flatten_dim) * 512


def test_architecture_rejects_tiny_input_and_padding():
    with pytest.raises(ValueError):
        Architecture.for_grid(4, 4)
    with pytest.raises(ValueError):
        Architecture(padding=1)


def test_init_deterministic_and_seeded():
    a = qnet.init_network(3)
    b = qnet.init_network(3)
    c = qnet.init_network(4)
    assert a.equals(b)
    assert not a.equals(c)
    assert all(np.all(v == 0) for k, v in a.blocks.items() if k.endswith("_b"))


def test_fresh_forward_is_finite(hills50):
    p = qnet.init_network(0)
    q = qnet.forward(p, gridworld.render_observation(hills50, (3, 4), (40, 41)))
    assert q.shape == (8,)
    assert np.all(np.isfinite(q))


def test_zero_observation_gives_zero_q():
    p = qnet.init_network(0)
    assert np.all(qnet.forward(p, np.zeros((3, 50, 50))) == 0)


def test_output_layer_is_linear(hills50):
    p = qnet.init_network(0)
    obs = gridworld.render_observation(hills50, (10, 10), (30, 20))
    q = qnet.forward(p, obs)
    p2 = p.copy()
    p2.blocks["fc3_w"] *= 2
    np.testing.assert_allclose(qnet.forward(p2, obs), 2 * q, rtol=1e-14, atol=0)


def test_forward_regression_value():
    arch = Architecture.for_grid(8, 8, fc_widths=(24, 16))
    p = qnet.init_network(1, arch)
    obs = np.random.default_rng(2).random((3, 8, 8))
    np.testing.assert_allclose(qnet.forward(p, obs), GOLDEN_Q, rtol=1e-10, atol=1e-12)


def test_forward_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        qnet.forward(qnet.init_network(0), np.zeros((3, 40, 50)))


def test_batch_forward_matches_single(hills20):
    p = qnet.init_network(5, Architecture.for_grid(20, 20))
    r = gridworld.ObservationRenderer(hills20)
    batch = r.batch([(1, 1), (7, 3), (19, 0)], [(4, 4), (10, 19), (0, 0)])
    q = qnet.forward(p, batch)
    for i in range(3):
        np.testing.assert_allclose(q[i], qnet.forward(p, batch[i]), rtol=1e-12, atol=1e-12)


def test_td_target_examples():
    arch = Architecture.for_grid(8, 8, fc_widths=(8, 8))
    p = qnet.init_network(0, arch)
    p.blocks["fc3_b"][:] = [0, 10, 3, 1, 2, -5, 0, 9]
    p.blocks["fc3_w"][:] = 0
    s = np.zeros((3, 8, 8))
    assert qnet.td_target(Transition(s, 0, 25.0, s, True), p, 0.99) == 25.0
    assert qnet.td_target(Transition(s, 0, -1.0, s, False), p, 0.0) == -1.0
    assert qnet.td_target(Transition(s, 0, -1.0, s, False), p, 0.99) == pytest.approx(8.9)
    y = qnet.td_targets(p, [-1.0, 25.0], np.stack([s, s]), [False, True], 0.99)
    np.testing.assert_allclose(y, [8.9, 25.0])


def test_transition_validation():
    s = np.zeros((3, 8, 8))
    with pytest.raises(ValueError):
        Transition(s, 8, 0.0, s, False)
    with pytest.raises(ValueError):
        Transition(s, 0, float("nan"), s, False)


def _pinned_output_net(values):
    arch = Architecture.for_grid(8, 8, fc_widths=(8, 8))
    p = qnet.init_network(0, arch)
    p.blocks["fc3_w"][:] = 0
    p.blocks["fc3_b"][:] = values
    return p


def test_loss_examples():
    p = _pinned_output_net([1, 2, 3, 4, 5, 6, 7, 8])
    s = np.zeros((3, 8, 8))
    assert qnet.loss(p, [Transition(s, 0, 0.0, s, True)], [1.0]) == 0.0
    assert qnet.loss(p, [Transition(s, 0, 0.0, s, True)], [3.0]) == 4.0
    batch = [Transition(s, 0, 0.0, s, True), Transition(s, 1, 0.0, s, True)]
    assert qnet.loss(p, batch, [2.0, 5.0]) == 5.0


def test_gradients_match_finite_differences():
    params, obs, actions, targets = fixture()
    errs = max_relative_errors(params, obs, actions, targets, per_block=40)
    assert max(errs.values()) < 1e-3, errs


def test_zero_learning_rate_keeps_params():
    params, obs, actions, targets = fixture()
    before = params.copy()
    qnet.grad_step(params, (obs, actions), targets, learning_rate=0.0)
    assert params.equals(before)


def test_grad_step_reduces_loss():
    params, obs, actions, targets = fixture()
    before = qnet.loss(params, (obs, actions), targets)
    _, reported = qnet.grad_step(params, (obs, actions), targets, learning_rate=1e-4)
    assert reported == before
    assert qnet.loss(params, (obs, actions), targets) < before


def test_adam_reduces_loss_over_steps():
    params, obs, actions, targets = fixture()
    opt = qnet.make_optimizer("adam", 1e-3)
    first = qnet.loss(params, (obs, actions), targets)
    for _ in range(50):
        qnet.grad_step(params, (obs, actions), targets, optimizer=opt)
    assert qnet.loss(params, (obs, actions), targets) < first


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_grad_step_detects_divergence():
    params, obs, actions, _ = fixture()
    before = params.copy()
    with pytest.raises(qnet.DivergenceError):
        qnet.grad_step(params, (obs, actions), [np.inf, 0, 0], learning_rate=1e-4)
    assert params.equals(before)


def test_gradient_clipping_bounds_update():
    params, obs, actions, _ = fixture()
    before = params.copy()
    opt = qnet.SGD(1.0, clip_norm=0.5)
    qnet.grad_step(params, (obs, actions), [1e6, -1e6, 1e6], optimizer=opt)
    delta = {k: params.blocks[k] - before.blocks[k] for k in params.blocks}
    assert qnet.global_norm(delta) == pytest.approx(0.5, rel=1e-9)


def test_sync_target_isolation():
    params, obs, actions, targets = fixture()
    target = qnet.sync_target(params)
    assert target.equals(params)
    s = obs[0]
    t = Transition(s, 1, -1.0, obs[1], False)
    y_before = qnet.td_target(t, target, 0.99)
    qnet.grad_step(params, (obs, actions), targets, learning_rate=1e-2)
    assert not target.equals(params)
    assert qnet.td_target(t, target, 0.99) == y_before


def test_checkpoint_roundtrip(tmp_path):
    p = qnet.init_network(9, Architecture.for_grid(20, 20))
    path = tmp_path / "net.ckpt"
    qnet.save_checkpoint(p, path, {"note": "x"})
    q, meta = qnet.load_checkpoint(path, expect=p.arch)
    assert q.equals(p)
    assert meta == {"note": "x"}
    with pytest.raises(qnet.CheckpointError):
        qnet.load_checkpoint(path, expect=Architecture())


@pytest.mark.parametrize("damage", ["magic", "truncate", "trailing", "version"])
def test_checkpoint_rejects_damage(tmp_path, damage):
    p = qnet.init_network(0, Architecture.for_grid(8, 8, fc_widths=(4, 4)))
    path = tmp_path / "n.ckpt"
    qnet.save_checkpoint(p, path)
    data = bytearray(path.read_bytes())
    if damage == "magic":
        data[:4] = b"XXXX"
    elif damage == "truncate":
        data = data[:-8]
    elif damage == "trailing":
        data += b"\0" * 8
    else:
        data[4] = 99
    path.write_bytes(bytes(data))
    with pytest.raises(qnet.CheckpointError):
        qnet.load_checkpoint(path)


@pytest.mark.parametrize("size", [20, 50])
def test_goal_conditioned_q_matches_forward(size):
    dem = terrain.generate(size, size, size)
    p = qnet.init_network(2, Architecture.for_grid(size, size))
    rng = np.random.default_rng(0)
    for b in p.blocks.values():
        b += rng.normal(scale=0.01, size=b.shape)
    goal = (size - 1, 3)
    fast = qnet.GoalConditionedQ(p, gridworld.elevation_channel(dem), goal, dtype=np.float64)
    cells = [(0, 0), (size - 1, size - 1), (size - 1, 0), (1, size - 2), (size // 2, size // 2),
             goal, (size - 2, 4)]
    cells += [tuple(int(v) for v in rng.integers(size, size=2)) for _ in range(20)]
    for agent in cells:
        ref = qnet.forward(p, gridworld.render_observation(dem, agent, goal))
        np.testing.assert_allclose(fast(agent), ref, rtol=1e-9, atol=1e-11)
