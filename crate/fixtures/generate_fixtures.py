"""Regenerate the FCIDUMP fixtures and manifest.json.

Requires pyscf. Geometries are experimental structures from the NIST
Computational Chemistry Comparison and Benchmark Database (CCCBDB), except
the synthetic H4 chain. Run from this directory:

    python3 generate_fixtures.py
"""

import json
import numpy as np
import pyscf
from pyscf import gto, scf, mp, cc, fci, ao2mo, mcscf
from pyscf.tools import fcidump

FIXTURES = [
    dict(name="h2_sto3g", basis="sto-3g", geometry_source="NIST CCCBDB experimental",
         atom="H 0 0 0; H 0 0 0.7414"),
    dict(name="h4_chain_sto3g", basis="sto-3g", geometry_source="synthetic linear chain, 1.2 A spacing",
         atom="H 0 0 0; H 0 0 1.2; H 0 0 2.4; H 0 0 3.6"),
    dict(name="lih_sto3g", basis="sto-3g", geometry_source="NIST CCCBDB experimental",
         atom="Li 0 0 0; H 0 0 1.5957"),
    dict(name="h2o_sto3g", basis="sto-3g", geometry_source="NIST CCCBDB experimental",
         atom="O 0 0 0.1173; H 0 0.7572 -0.4692; H 0 -0.7572 -0.4692"),
    dict(name="beh2_sto3g", basis="sto-3g", geometry_source="NIST CCCBDB experimental",
         atom="Be 0 0 0; H 0 0 1.3264; H 0 0 -1.3264"),
    dict(name="beh2_ccpvdz", basis="cc-pvdz", geometry_source="NIST CCCBDB experimental",
         atom="Be 0 0 0; H 0 0 1.3264; H 0 0 -1.3264"),
]


def run(fx):
    mol = gto.M(atom=fx["atom"], basis=fx["basis"], unit="Angstrom", verbose=0)
    mf = scf.RHF(mol).run(conv_tol=1e-12)
    pt = mp.MP2(mf).run()
    cc_ = cc.CCSD(mf).run(conv_tol=1e-9)
    nmo = mf.mo_coeff.shape[1]
    e_fci = fci.FCI(mf).kernel()[0]
    fcidump.from_scf(mf, fx["name"] + ".fcidump")
    rec = dict(
        file=fx["name"] + ".fcidump",
        generator="pyscf " + pyscf.__version__,
        method="RHF canonical orbitals, no frozen core",
        basis=fx["basis"],
        geometry_angstrom=fx["atom"],
        geometry_source=fx["geometry_source"],
        n_orbitals=nmo,
        n_electrons=int(mol.nelectron),
        frozen_core=False,
        e_hf=mf.e_tot,
        e_mp2=pt.e_tot,
        e_mp2_corr=pt.e_corr,
        e_ccsd=cc_.e_tot,
        e_fci=e_fci,
    )
    out = [rec]
    if fx["name"] == "beh2_ccpvdz":
        # Be 1s folded into the core energy.
        cas = mcscf.CASCI(mf, nmo - 1, mol.nelectron - 2)
        h1, ecore = cas.get_h1eff()
        h2 = ao2mo.restore(8, cas.get_h2eff(), nmo - 1)
        name = fx["name"] + "_fc"
        fcidump.from_integrals(name + ".fcidump", h1, h2, nmo - 1,
                               mol.nelectron - 2, nuc=ecore)
        e_fc = cas.kernel()[0]
        pt_fc = mp.MP2(mf, frozen=1).run()
        cc_fc = cc.CCSD(mf, frozen=1).run(conv_tol=1e-9)
        out.append(dict(rec, file=name + ".fcidump",
                        method="RHF canonical orbitals, Be 1s frozen into core",
                        n_orbitals=nmo - 1, n_electrons=int(mol.nelectron) - 2,
                        frozen_core=True, e_mp2=pt_fc.e_tot, e_mp2_corr=pt_fc.e_corr,
                        e_ccsd=cc_fc.e_tot, e_fci=e_fc))
    return out


def main():
    manifest = {"schema": 1, "fixtures": {}}
    for fx in FIXTURES:
        for rec in run(fx):
            key = rec["file"].removesuffix(".fcidump")
            manifest["fixtures"][key] = rec
            print(key, rec["e_hf"], rec["e_fci"], flush=True)
    with open("manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
