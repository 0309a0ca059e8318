"""Compare the compiled and numpy kernel backends on cube meshes.

Usage: python3 benchmarks/bench_kernels.py [--n 8 16] [--repeat 5]
"""
import argparse
import timeit

from strainfem import kernels
from strainfem.elasticity import Material
from strainfem.mesh import generate_cube_mesh

def cases(mesh, backend):
    form = Material(1.0, 1.0).form()
    ops = backend.sym_grad_operators(mesh.vertices, mesh.tets)
    maps = backend.dof_maps(mesh.vertices, mesh.tets)
    return {
        "signed_volumes": lambda: backend.signed_volumes(mesh.vertices, mesh.tets),
        "dof_maps": lambda: backend.dof_maps(mesh.vertices, mesh.tets),
        "invert_blocks": lambda: backend.invert_blocks(maps),
        "barycentric_gradients": lambda: backend.barycentric_gradients(mesh.vertices, mesh.tets),
        "sym_grad_operators": lambda: backend.sym_grad_operators(mesh.vertices, mesh.tets),
        "weighted_blocks": lambda: backend.weighted_blocks(ops, mesh.volumes, form),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[8, 16])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    names = kernels.available_backends()
    if "cython" not in names:
        print("compiled backend not built; only the numpy fallback is timed")
    for n in args.n:
        mesh = generate_cube_mesh(n)
        print(f"\nn={n}: {mesh.n_tets} tets")
        print(f"{'kernel':<24}" + "".join(f"{b:>12}" for b in names) + ("     speedup" if len(names) > 1 else ""))
        timings = {b: {k: min(timeit.repeat(f, number=1, repeat=args.repeat))
                       for k, f in cases(mesh, kernels.load_backend(b)).items()} for b in names}
        for k in timings[names[0]]:
            row = f"{k:<24}" + "".join(f"{timings[b][k] * 1e3:>10.2f}ms" for b in names)
            if len(names) > 1:
                row += f"{timings['python'][k] / timings['cython'][k]:>11.1f}x"
            print(row)


if __name__ == "__main__":
    main()
