from __future__ import annotations

import ctypes
import shutil
import subprocess
from pathlib import Path

import pytest

from fpscan.catalog import default_catalog
from fpscan.model import Observation, ScanDataset
from fpscan.signatures import build_page, build_script
from fpscan.synth import ChurnConfig, SynthConfig, generate

REFERENCE = Path(__file__).parent / "reference" / "libfuzzy"
FUZZY_MAX_RESULT = 148


class LibFuzzy:
    """ctypes wrapper over the vendored C reference implementation."""

    def __init__(self, path: Path):
        self.lib = ctypes.CDLL(str(path))
        self.lib.fuzzy_hash_buf.argtypes = [ctypes.c_char_p, ctypes.c_uint32, ctypes.c_char_p]
        self.lib.fuzzy_hash_buf.restype = ctypes.c_int
        self.lib.fuzzy_compare.argtypes = [ctypes.c_char_p, ctypes.c_char_p]
        self.lib.fuzzy_compare.restype = ctypes.c_int

    def hash(self, data: bytes) -> str:
        out = ctypes.create_string_buffer(FUZZY_MAX_RESULT)
        if self.lib.fuzzy_hash_buf(data, len(data), out) != 0:
            raise RuntimeError("fuzzy_hash_buf failed")
        return out.value.decode("ascii")

    def compare(self, a: str, b: str) -> int:
        return self.lib.fuzzy_compare(a.encode("ascii"), b.encode("ascii"))


@pytest.fixture(scope="session")
def libfuzzy(tmp_path_factory) -> LibFuzzy:
    if shutil.which("gcc") is None:
        pytest.skip("gcc not available to build the reference CTPH library")
    build = tmp_path_factory.mktemp("libfuzzy")
    for f in REFERENCE.iterdir():
        shutil.copy(f, build / f.name)
    subprocess.run(
        ["gcc", "-O2", "-shared", "-fPIC", "-DHAVE_CONFIG_H", "-I.", "fuzzy.c", "edit_dist.c",
         "-o", "libfuzzy.so"],
        cwd=build, check=True, capture_output=True,
    )
    return LibFuzzy(build / "libfuzzy.so")


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


def make_script(url: str, tokens, oid: int = 1, gid0: int = 0, catalog=None):
    """A script whose observations resolve to ``tokens`` in order."""
    catalog = catalog or default_catalog()
    obs = [
        Observation(gid0 + i, i, oid, catalog[t].members[0], t, url)
        for i, t in enumerate(tokens)
    ]
    return build_script(url, oid, obs, catalog)


def make_page(domain: str, scripts: dict[str, list[str]]):
    built = []
    gid = 0
    for oid, (url, tokens) in enumerate(scripts.items(), 1):
        built.append(make_script(url, tokens, oid, gid))
        gid += len(tokens)
    return build_page(domain, built)


def make_dataset(pages, scan_id: str = "scan") -> ScanDataset:
    return ScanDataset(scan_id, None, {p.page_domain: p for p in sorted(pages, key=lambda p: p.page_domain)})


@pytest.fixture(scope="session")
def default_synth():
    return generate(SynthConfig(seed=1))


@pytest.fixture(scope="session")
def churn_synth():
    config = SynthConfig(
        seed=7, pages=60, noise_scripts=10, network_count=4, network_members=(5, 20),
        churn=ChurnConfig(cache_buster_rate=0.30, domain_churn_rate=0.05, both_churn_rate=0.02),
    )
    return generate(config)
