"""Kubo-averaged scalar product, the Grabert projector and the quantum drift term."""

import numpy as np

from projlab import inner as ip
from projlab import quantum as qm

rng = np.random.default_rng(0)
sx = np.array([[0, 1], [1, 0]], complex)
sz = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2)

# the Kubo product of sigma_x with itself is twice a logarithmic mean
rho = np.diag([0.75, 0.25])
kubo = ip.inner_product(sx, sx, ip.InnerProductSpec("kubo_averaged", rho))
print(f"(sx, sx)_Kubo = {kubo.real:.6f}, 2 L(3/4, 1/4) = {2 * ip.log_mean(0.75, 0.25):.6f}")

# the Kubo relation holds for any Gibbs state
H = qm.random_hermitian(8, rng)
X = qm.random_hermitian(8, rng)
print(f"Kubo relation residual at beta = 5: {ip.miracle_residual(X, H, 5.0):.1e}")

layout = qm.HilbertLayout(2, 2)
for g in (0.0, 0.5):
    H = 0.5 * np.kron(sz, I2) + 0.5 * np.kron(I2, sz) + g * np.kron(sx, sx)
    dq = ip.drift_term_quantum(sx, H, 1.0, layout, h_env=0.5 * sz)
    print(f"g = {g}: |drift - i[H*_S, X_S]| = {dq.difference:.2e}, "
          f"necessary condition residual {dq.necessary_condition:.2e}")

P = ip.GrabertProjector.for_gibbs(H, 1.0, layout)
Y = qm.random_hermitian(4, rng)
print(f"Grabert projector: idempotence {np.linalg.norm(P.project(P.project(Y)) - P.project(Y)):.1e}, "
      f"Sigma_S condition number {P.condition_number:.2f}")
