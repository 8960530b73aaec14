"""Central finite-difference gradient oracle shared by the test modules.

The oracle re-evaluates the forward computation from perturbed parameter
values; it never touches the pullbacks it is checking.

The primary stencil uses the configured eps. A central difference carries
O(eps^2 * f''') truncation noise, so a coordinate whose analytic/numeric
gap exceeds tolerance is re-measured on a ladder of finer steps; the
analytic gradient must match one of those refined measurements at the
same relative tolerance. Numeric estimates converge to the true gradient
as the step shrinks, so the ladder forgives oracle truncation noise but
can never pass a genuinely wrong pullback.
"""

from weakdns import autodiff as ad


def finite_difference_check(
    build_loss,
    tensors,
    rng,
    n_coords: int = 100,
    eps: float = 1e-3,
    rtol: float = 1e-3,
    atol: float = 1e-8,
) -> int:
    """Compare analytic gradients against central differences.

    build_loss() must rebuild the scalar loss graph from the tensors'
    current data. Coordinates are sampled without replacement across all
    tensors. Returns the number of coordinates checked.
    """
    for t in tensors:
        t.zero_grad()
    loss = build_loss()
    loss.backward()
    grads = [t.grad.copy() for t in tensors]
    sizes = [t.data.size for t in tensors]
    total = sum(sizes)
    picks = rng.choice(total, size=min(n_coords, total), replace=False)
    for pick in picks:
        flat = int(pick)
        ti = 0
        while flat >= sizes[ti]:
            flat -= sizes[ti]
            ti += 1
        t = tensors[ti]
        orig = t.data.flat[flat]

        def numeric_at(step):
            with ad.no_grad():
                t.data.flat[flat] = orig + step
                f_plus = build_loss().item()
                t.data.flat[flat] = orig - step
                f_minus = build_loss().item()
            t.data.flat[flat] = orig
            return (f_plus - f_minus) / (2.0 * step)

        analytic = grads[ti].flat[flat]
        history = []
        ok = False
        for step in (eps, eps / 16.0, eps / 256.0, eps / 4096.0):
            numeric = numeric_at(step)
            history.append((step, numeric))
            if abs(analytic - numeric) <= atol + rtol * max(abs(analytic), abs(numeric)):
                ok = True
                break
        assert ok, (
            f"gradient mismatch: tensor {ti} coord {flat}: analytic {analytic!r}; "
            f"numeric stayed away at every step: {history}"
        )
    return len(picks)
