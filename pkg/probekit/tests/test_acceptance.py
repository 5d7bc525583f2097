"""Probe-correctness acceptance: hand counts, gradient check, invariances.

Run with ``pytest tests/test_acceptance.py -v -s``.
"""
from __future__ import annotations

import numpy as np
import pytest
import torch

from probekit import proxies, zoo


def ok(name: str) -> None:
    print(f"\nACCEPTANCE {name}: PASS", flush=True)


class TestProbeCorrectness:
    def test_probe_correctness(self):
        # documented hand counts
        linear, linear_shape = zoo.build("linear8x3")
        mlp, mlp_shape = zoo.build("mlp4x5x2")
        assert proxies.probe_params(linear) == 27
        assert proxies.probe_params(mlp) == 37

        # saliency agrees with central finite differences (1e-4 relative)
        saliencies = proxies.synflow_saliencies(linear, linear_shape)
        analytic = np.concatenate([s.numpy().ravel() for s in saliencies])
        reference, _ = zoo.build("linear8x3")
        theta_abs = np.concatenate([
            p.detach().double().abs().numpy().ravel()
            for p in reference.parameters()
        ])

        def objective(flat: np.ndarray) -> float:
            probe, _ = zoo.build("linear8x3")
            probe = probe.double()
            offset = 0
            with torch.no_grad():
                for p in probe.parameters():
                    p.copy_(torch.as_tensor(
                        flat[offset:offset + p.numel()],
                        dtype=torch.float64).reshape(p.shape))
                    offset += p.numel()
                return float(probe(torch.ones((1, *linear_shape),
                                              dtype=torch.float64)).sum())

        h = 1e-6
        for index in range(len(theta_abs)):
            plus, minus = theta_abs.copy(), theta_abs.copy()
            plus[index] += h
            minus[index] -= h
            grad_fd = (objective(plus) - objective(minus)) / (2 * h)
            assert analytic[index] == pytest.approx(
                abs(theta_abs[index] * grad_fd), rel=1e-4, abs=1e-10)

        # activation-overlap score is permutation invariant over batch order
        generator = torch.Generator().manual_seed(11)
        batch = torch.randn((6, *mlp_shape), generator=generator)
        base = proxies.probe_naswot(mlp, batch)
        for seed in range(5):
            g = torch.Generator().manual_seed(seed)
            perm = torch.randperm(6, generator=g)
            assert proxies.probe_naswot(mlp, batch[perm]) == pytest.approx(
                base, rel=1e-9, abs=1e-9)

        # 50-seed saliency stability on a fixed toy model
        scores = []
        for _ in range(50):
            model, shape = zoo.build("mlp4x5x2")
            scores.append(proxies.probe_synflow(model, shape))
        mean = sum(scores) / len(scores)
        mrd = sum(abs(s - mean) for s in scores) / len(scores) / abs(mean)
        assert mrd <= 0.05
        ok("probe-correctness")
