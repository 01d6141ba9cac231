#!/usr/bin/env python3
"""Run the full operator pipeline through the CLI on the synthetic fixture set.

pol-build -> registry-open -> registry-submit (liabilities) -> eth-prove /
erc20-prove / btc-prove -> registry-submit (reserves) -> ownership-sign ->
solvency-prove -> registry-finalize

Public reserve attestations carry a rounded-down floor; the exact claim amounts
only enter the solvency witness. ``--bump ASSET`` adds one unit to one user's
liability for ASSET (eth, token or btc), which must make solvency-prove fail.
"""

import argparse
import contextlib
import io
import json
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from ppos import cli  # noqa: E402
from ppos.solvency import BTC_SCHEME, ETH_SCHEME, owner_of  # noqa: E402

E2E = ROOT / "tests" / "fixtures" / "e2e"
ETH_FIX = ROOT / "tests" / "fixtures" / "eth"


def floor2(value: int) -> int:
    """Round down to two significant digits: the coarse public minimum."""
    scale = 10 ** max(len(str(value)) - 2, 0)
    return value // scale * scale


def call(argv, log):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli.run([str(a) for a in argv])
    log.append({"argv": argv[0], "code": code, "stderr": err.getvalue().strip()})
    text = out.getvalue().strip()
    return code, json.loads(text) if text else None


def bumped_users(asset: str, params: dict) -> str:
    target = {"eth": ("eth-mainnet", "00" * 20), "token": ("eth-mainnet", params["token_contract"]),
              "btc": ("btc-mainnet", "00" * 20)}[asset]
    lines = (E2E / "users.jsonl").read_text().splitlines()
    for i, line in enumerate(lines):
        user = json.loads(line)
        for b in user["balances"]:
            if (b["network"], b["asset_hex"]) == target:
                b["amount_decimal"] = str(int(b["amount_decimal"]) + 1)
                lines[i] = json.dumps(user, sort_keys=True)
                return "\n".join(lines) + "\n"
    raise ValueError(f"no user holds {asset}")


def run_pipeline(work: Path, bump: str | None = None) -> dict:
    """Returns {"steps": [...], "solvency_code": int, "final": round summary or None}."""
    work.mkdir(parents=True, exist_ok=True)
    params = json.loads((E2E / "params.json").read_text())
    keys = json.loads((E2E / "keys.json").read_text())
    steps = []
    reg = ["--log", work / "registry.log"]

    users = E2E / "users.jsonl"
    if bump:
        users = work / "users.jsonl"
        users.write_text(bumped_users(bump, params))
    code, pol = call(["pol-build", "--input", users, "--out", work / "pol", "--seed", 7], steps)
    assert code == 0, steps[-1]
    code, btc = call(["btc-root", "--dump", E2E / "utxo_dump.jsonl"], steps)
    code, rnd = call(["registry-open", *reg, "--eth-block-hash", params["eth_block_hash"],
                      "--btc-utxo-root", btc["utxo_root"], "--btc-snapshot-block", btc["snapshot_block"]], steps)
    assert code == 0, steps[-1]
    round_id = rnd["round_id"]
    call(["registry-submit", *reg, "--round-id", round_id, "--proof-dir", work / "pol"], steps)

    claims = []
    exact = {}
    for n, label in enumerate(("eth-0", "eth-1")):
        exact[label] = int(params["eth_amounts"][n])
        call(["eth-prove", "--fixture", E2E / f"{label}.json", "--min-amount", floor2(exact[label]),
              "--out", work / label], steps)
        claims.append((label, {"network": params["eth_network"], "asset": "00" * 20}, ETH_SCHEME))
    holder = owner_of(bytes.fromhex(keys["erc20-0"]), ETH_SCHEME).hex()
    exact["erc20-0"] = int(params["token_amount"])
    call(["erc20-prove", "--fixture", ETH_FIX / "synthetic_erc20.json", "--holder", holder,
          "--mapping-slot", params["mapping_slot"], "--min-amount", floor2(exact["erc20-0"]),
          "--out", work / "erc20-0"], steps)
    claims.append(("erc20-0", {"network": params["eth_network"], "asset": params["token_contract"]}, ETH_SCHEME))
    for label in ("btc-0", "btc-1"):
        script = owner_of(bytes.fromhex(keys[label]), BTC_SCHEME).hex()
        exact[label] = sum(int(v) for v in params["btc_owned"][label])
        call(["btc-prove", "--dump", E2E / "utxo_dump.jsonl", "--script", script,
              "--min-amount", floor2(exact[label]), "--out", work / label], steps)
        claims.append((label, {"network": params["btc_network"], "asset": "00" * 20}, BTC_SCHEME))
    for label, *_ in claims:
        call(["registry-submit", *reg, "--round-id", round_id, "--proof-dir", work / label], steps)

    manifest = []
    for label, asset, scheme in claims:
        call(["ownership-sign", "--key-file", E2E / "keys.json", "--key-name", label, "--scheme", scheme,
              "--round-id", round_id, "--root", pol["root"], "--chain-tag", asset["network"],
              "--out", work / f"sig-{label}.json"], steps)
        manifest.append({"asset": asset, "proof_dir": label, "signature": f"sig-{label}.json",
                         "amount": str(exact[label])})
    (work / "claims.json").write_text(json.dumps({"claims": manifest}, indent=1))

    solvency_code, _ = call(["solvency-prove", "--round-id", round_id, "--liabilities", work / "pol",
                             "--claims", work / "claims.json", "--out", work / "solvency"], steps)
    final = None
    if solvency_code == 0:
        _, final = call(["registry-finalize", *reg, "--round-id", round_id, "--proof-dir", work / "solvency"],
                        steps)
    return {"steps": steps, "solvency_code": solvency_code, "final": final, "round_id": round_id}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", help="keep outputs here (default: a temporary directory)")
    ap.add_argument("--bump", choices=("eth", "token", "btc"))
    args = ap.parse_args(argv)
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(args.workdir or tmp)
        result = run_pipeline(work, args.bump)
    for step in result["steps"]:
        print(f"{step['code']}  {step['argv']}" + (f"  ({step['stderr']})" if step["stderr"] else ""))
    print(json.dumps(result["final"]))
    return 0 if (result["final"] or {}).get("verdict", {}).get("accepted") else 1


if __name__ == "__main__":
    sys.exit(main())
