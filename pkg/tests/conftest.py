import json
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"
sys.path.insert(0, str(ROOT / "scripts"))

MAINNET_FIXTURES = [FIXTURES / "eth" / f"mainnet_genesis_{k}.json" for k in ("largest", "first", "median")]
ERC20_FIXTURE = FIXTURES / "eth" / "synthetic_erc20.json"
E2E = FIXTURES / "e2e"


@pytest.fixture(scope="session")
def e2e_params():
    return json.loads((E2E / "params.json").read_text())


@pytest.fixture(scope="session")
def e2e_keys():
    keys = json.loads((E2E / "keys.json").read_text())
    return {k: bytes.fromhex(v) for k, v in keys.items() if k != "note"}
