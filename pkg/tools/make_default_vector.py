"""Regenerate the generating vector bundled with the package.

Builds a rank-1 lattice generating vector by the component-by-component
search at n = 2**13 points in up to 1024 dimensions, using product
weights gamma_j = j**-2, and writes it to src/rdqmc/data/ so that
``default_generating_vector`` can load it at runtime.

Run from the repository root:

    python3 tools/make_default_vector.py
"""

import pathlib
import time

from rdqmc.lattice import cbc_construct, product_weights, save_generating_vector

N = 2**13
DIM = 1024

out = (
    pathlib.Path(__file__).resolve().parents[1]
    / "src"
    / "rdqmc"
    / "data"
    / f"lattice_cbc_n{N}_s{DIM}.txt"
)

t0 = time.perf_counter()
z = cbc_construct(N, DIM, product_weights(2.0, DIM))
elapsed = time.perf_counter() - t0

save_generating_vector(
    out,
    z,
    comment=(
        f"rank-1 lattice generating vector, n={N}, dimensions={DIM}\n"
        f"component-by-component search, product weights j^-2\n"
        f"regenerate with tools/make_default_vector.py"
    ),
)
print(f"wrote {out} ({DIM} components, {elapsed:.1f} s)")
print("first 16 components:", z[:16].tolist())
