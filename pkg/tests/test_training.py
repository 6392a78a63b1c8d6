import numpy as np
import pytest

from framecast import nn
from framecast.dataio import Triplet
from framecast.refinement import Refiner, RefinerConfig
from framecast.training import TrainOptions, prepare_samples, train
from framecast.warping import flow_between, warp_backward

from oracles import make_texture, periodic_shift

TINY = RefinerConfig(embed_channels=8, enc_levels=2, base_channels=4,
                     attention_downsample=2, init_seed=1)


def small_triplet(seed=0, offset=0.05):
    base = make_texture(16, 16, seed=seed)
    first = base
    second = periodic_shift(base, 2.0, 0.0)
    target = np.clip(periodic_shift(base, 1.0, 0.0) + np.float32(offset), 0.0, 1.0)
    return Triplet(first, second, target)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError, match="empty"):
        train(Refiner.build(TINY), [], TrainOptions(steps=1, batch_size=1, crop=None))


def test_options_validated():
    with pytest.raises(ValueError, match="batch_size"):
        TrainOptions(batch_size=0).validate()
    with pytest.raises(ValueError, match="mode"):
        TrainOptions(mode="bogus").validate()


def test_prepare_samples_uses_warp_pipeline():
    t = small_triplet()
    samples = prepare_samples([t], mode="interp")
    first, second, warped, target = samples[0]
    flow = flow_between(t.first, t.second)
    assert np.array_equal(warped, warp_backward(t.first, flow, 0.5))
    assert np.array_equal(first, t.first)
    assert np.array_equal(target, t.target)

    samples_future = prepare_samples([t], mode="future")
    assert np.array_equal(samples_future[0][2], warp_backward(t.second, flow, 1.0))


def test_initial_loss_equals_warp_only_error():
    # with the zero-initialized head the step-0 loss is the warp-only L1
    t = small_triplet(seed=1)
    model = Refiner.build(TINY)
    history = train(model, [t], TrainOptions(steps=1, batch_size=1, lr=1e-4,
                                             crop=None, rot90=False, seed=0))
    (_, _, warped, target) = prepare_samples([t], mode="interp")[0]
    expected = nn.l1_loss(nn.Tensor(warped), nn.Tensor(target)).item()
    assert history[0] == pytest.approx(expected, abs=1e-7)


def test_lr_zero_leaves_parameters_bit_identical():
    t = small_triplet(seed=2)
    model = Refiner.build(TINY)
    before = {k: v.data.copy() for k, v in model.params.items()}
    train(model, [t], TrainOptions(steps=3, batch_size=1, lr=0.0, crop=None,
                                   rot90=False, seed=0))
    for k in before:
        assert np.array_equal(before[k], model.params[k].data)


def test_same_seed_gives_identical_history():
    triplets = [small_triplet(seed=3), small_triplet(seed=4)]
    opts = TrainOptions(steps=4, batch_size=2, lr=1e-3, crop=(8, 8), rot90=True, seed=7)
    h1 = train(Refiner.build(TINY), triplets, opts)
    h2 = train(Refiner.build(TINY), triplets, opts)
    assert h1 == h2


def test_loss_decreases_on_learnable_offset():
    t = small_triplet(seed=5, offset=0.06)
    model = Refiner.build(TINY)
    history = train(model, [t], TrainOptions(steps=60, batch_size=1, lr=3e-3,
                                             crop=None, rot90=False, seed=0))
    assert history[-1] < history[0] * 0.5


def test_augmented_training_runs_with_rotation():
    t = small_triplet(seed=6)
    model = Refiner.build(TINY)
    history = train(model, [t], TrainOptions(steps=2, batch_size=2, lr=1e-3,
                                             crop=(8, 8), rot90=True, seed=1))
    assert len(history) == 2
    assert all(np.isfinite(v) for v in history)
