"""Cube partition, attention patterns, and closed-form complexity against
brute-force predicates and the instrumented counter."""

import math
import random

import pytest
import torch

from promptvos.cubes import (
    AttentionPattern,
    CubeSpec,
    build_cfmsa_mask,
    build_global_mask,
    build_pattern,
    build_w3d_mask,
    cube_assignment,
    flops_count,
    instrumented_flops,
)
from promptvos.errors import ShapeError


def brute_force_cube_id(spec: CubeSpec, y: int, x: int) -> tuple[int, int]:
    return (
        ((y + spec.shift_y) % spec.height) // spec.window,
        ((x + spec.shift_x) % spec.width) // spec.window,
    )


def token_coords(spec: CubeSpec):
    for t in range(spec.clip_len):
        for y in range(spec.height):
            for x in range(spec.width):
                yield t, y, x


def test_single_cube_when_window_covers_grid():
    spec = CubeSpec(3, 4, 4, 4)
    assert cube_assignment(spec).unique().numel() == 1


def test_four_cubes_on_4x4_window2():
    spec = CubeSpec(2, 4, 4, 2)
    ids = cube_assignment(spec)
    assert ids.unique().numel() == 4
    # each cube holds clip_len * window^2 tokens
    for cube in ids.unique():
        assert int((ids == cube).sum()) == 2 * 4


def test_shifted_partition_matches_modular_formula():
    spec = CubeSpec(2, 4, 4, 2, shift_y=1, shift_x=1)
    ids = cube_assignment(spec)
    seen = {}
    for flat, (t, y, x) in enumerate(token_coords(spec)):
        key = brute_force_cube_id(spec, y, x)
        if key in seen:
            assert int(ids[flat]) == seen[key]
        else:
            seen[key] = int(ids[flat])
    assert len(seen) == ids.unique().numel()


def test_window_larger_than_grid_rejected():
    with pytest.raises(ShapeError):
        CubeSpec(2, 4, 4, 5)


def test_bad_shift_rejected():
    with pytest.raises(ShapeError):
        CubeSpec(2, 4, 4, 2, shift_y=2)


# ----------------------------------------------------------------------
# patterns
# ----------------------------------------------------------------------

def brute_force_allowed(spec: CubeSpec, variant: str):
    coords = list(token_coords(spec))
    n = len(coords)
    mask = torch.zeros(n, n, dtype=torch.bool)
    for i, (ti, yi, xi) in enumerate(coords):
        for j, (tj, yj, xj) in enumerate(coords):
            same_cube = brute_force_cube_id(spec, yi, xi) == brute_force_cube_id(spec, yj, xj)
            if variant == "w3d":
                mask[i, j] = same_cube
            elif variant == "cfmsa":
                mask[i, j] = (ti == tj) or same_cube
            else:
                mask[i, j] = True
    return mask


def test_cfmsa_clip_len_one_is_pure_spatial_global():
    spec = CubeSpec(1, 4, 4, 2)
    pattern = build_cfmsa_mask(spec)
    assert bool(pattern.mask.all())


def test_cfmsa_allowed_set_size_t2_h4_w4_m2():
    spec = CubeSpec(2, 4, 4, 2)
    pattern = build_cfmsa_mask(spec)
    want = 4 * 4 + (2 - 1) * 2 * 2  # same frame plus same cube in other frames
    assert (pattern.mask.sum(dim=1) == want).all()


def test_cfmsa_allowed_set_size_formula_t3_h8_m4():
    spec = CubeSpec(3, 8, 8, 4)
    pattern = build_cfmsa_mask(spec)
    want = 8 * 8 + 2 * 16
    assert (pattern.mask.sum(dim=1) == want).all()


@pytest.mark.parametrize("clip_len", [1, 2, 3])
@pytest.mark.parametrize("grid", [4, 8])
@pytest.mark.parametrize("window", [2, 4])
def test_cfmsa_pattern_equals_brute_force_predicate(clip_len, grid, window):
    spec = CubeSpec(clip_len, grid, grid, window)
    assert torch.equal(build_cfmsa_mask(spec).mask, brute_force_allowed(spec, "cfmsa"))


def test_w3d_pattern_equals_brute_force_predicate():
    for spec in [CubeSpec(2, 4, 4, 2), CubeSpec(3, 4, 4, 2, 1, 1), CubeSpec(2, 8, 8, 4)]:
        assert torch.equal(build_w3d_mask(spec).mask, brute_force_allowed(spec, "w3d"))


def test_w3d_window_covering_grid_equals_global():
    spec = CubeSpec(2, 4, 4, 4)
    assert torch.equal(build_w3d_mask(spec).mask, build_global_mask(spec).mask)


def test_w3d_allowed_set_size():
    spec = CubeSpec(3, 8, 8, 4)
    pattern = build_w3d_mask(spec)
    assert (pattern.mask.sum(dim=1) == 3 * 16).all()


def test_disjoint_cubes_never_attend():
    spec = CubeSpec(2, 4, 4, 2)
    ids = cube_assignment(spec)
    mask = build_w3d_mask(spec).mask
    different = ids[:, None] != ids[None, :]
    assert not bool((mask & different).any())


def test_patterns_reflexive_and_symmetric():
    for spec in [CubeSpec(2, 4, 4, 2), CubeSpec(3, 8, 8, 4, 2, 2)]:
        for variant in ("cfmsa", "w3d", "global"):
            pattern = build_pattern(variant, spec)
            assert pattern.is_reflexive()
            assert pattern.is_symmetric()


def test_cfmsa_full_window_pattern_coincides_with_global():
    spec = CubeSpec(2, 4, 4, 4)
    assert torch.equal(build_cfmsa_mask(spec).mask, build_global_mask(spec).mask)


def test_shift_zero_equals_unshifted():
    spec = CubeSpec(2, 4, 4, 3)  # window//2 == 1, shift 0 stays legal
    assert torch.equal(build_cfmsa_mask(spec).mask, build_cfmsa_mask(CubeSpec(2, 4, 4, 3, 0, 0)).mask)


# ----------------------------------------------------------------------
# complexity
# ----------------------------------------------------------------------

def test_flops_closed_forms_match_reference_formulas():
    t, h, w, c, m = 6, 22, 22, 256, 11
    assert flops_count("global", t, h, w, c, m) == 2 * (t * h * w) ** 2 * c
    assert flops_count("w3d", t, h, w, c, m) == 2 * m * m * t * t * h * w * c
    assert flops_count("cfmsa", t, h, w, c, m) == 2 * t * h * w * ((t - 1) * m * m + h * w) * c
    # evaluated value of the cube-frame form at this spec
    assert flops_count("cfmsa", t, h, w, c, m) == 1_619_177_472


def test_flops_match_instrumented_counter_exactly():
    spec = CubeSpec(6, 22, 22, 11)
    for variant in ("cfmsa", "w3d", "global"):
        closed = flops_count(variant, 6, 22, 22, 256, 11)
        assert closed == instrumented_flops(variant, spec, 256)


def test_flops_randomized_specs_all_variants():
    rng = random.Random(0)
    for _ in range(10):
        window = rng.choice([2, 3, 4])
        grid_h = window * rng.randint(1, 3)
        grid_w = window * rng.randint(1, 3)
        clip_len = rng.randint(1, 4)
        channels = rng.choice([16, 64, 256])
        spec = CubeSpec(clip_len, grid_h, grid_w, window)
        for variant in ("cfmsa", "w3d", "global"):
            closed = flops_count(variant, clip_len, grid_h, grid_w, channels, window)
            assert closed == instrumented_flops(variant, spec, channels)


def test_flops_coincide_at_clip_len_one():
    assert flops_count("cfmsa", 1, 8, 8, 64, 4) == flops_count("global", 1, 8, 8, 64, 4)


def test_w3d_vs_cfmsa_cost_comparison():
    """w3d >= cfmsa cost iff M^2*T >= (T-1)*M^2 + H*W, i.e. M^2 >= H*W."""
    rng = random.Random(1)
    for _ in range(10):
        window = rng.choice([2, 4])
        grid = window * rng.randint(1, 4)
        clip_len = rng.randint(1, 5)
        lhs = window**2 * clip_len
        rhs = (clip_len - 1) * window**2 + grid * grid
        w3d = flops_count("w3d", clip_len, grid, grid, 64, window)
        cf = flops_count("cfmsa", clip_len, grid, grid, 64, window)
        assert (lhs >= rhs) == (w3d >= cf)


def test_runtime_counter_agrees_with_pattern_count(seeded):
    """Actually running masked attention charges the same MACs the
    pattern-derived count predicts."""
    from promptvos.nn.counter import count_macs
    from promptvos.nn.functional import AttentionParams, multi_head_attention

    spec = CubeSpec(2, 4, 4, 2)
    pattern = build_cfmsa_mask(spec)
    params = AttentionParams(16, 2)
    x = torch.randn(spec.tokens, 16)
    with count_macs() as counter:
        multi_head_attention(x, x, params, pattern.mask)
    assert counter.attention == instrumented_flops("cfmsa", spec, 16)
