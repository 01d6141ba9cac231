"""Operator command line.

Each stage reads and writes files so it can be run and audited on its own.
Prove commands write ``statement.json``, ``witness.json`` and
``attestation.json`` into an output directory; later stages take those paths.

Exit codes: 0 ok, 1 verification or relation rejection, 2 usage or malformed
input, 3 I/O or transport failure. Machine-readable results go to stdout as
JSON, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
from pathlib import Path
from typing import List, Optional

from . import attestor, btcstate, ethstate, liabilities, merkle, registry, rpcclient, solvency
from .attestor import Attestation
from .hashcodec import keccak256
from .liabilities import AssetId
from .relation import ParseError, hexb, load_canonical, unhex

log = logging.getLogger("ppos")

EXIT_OK, EXIT_REJECT, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _usage(msg: str) -> CliError:
    return CliError(EXIT_USAGE, msg)


def _reject(msg: str) -> CliError:
    return CliError(EXIT_REJECT, msg)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from exc


def _read_json(path):
    try:
        return json.loads(_read_bytes(path))
    except ValueError as exc:
        raise _usage(f"{path}: not valid JSON: {exc}") from exc


def _write(path, data) -> None:
    if isinstance(data, str):
        data = data.encode()
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(data)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from exc


def _write_json(path, obj) -> None:
    _write(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _hex_arg(text: str, length: Optional[int], what: str) -> bytes:
    try:
        return unhex(text, length, what)
    except ParseError as exc:
        raise _usage(str(exc)) from exc


def _write_proof(out_dir, relation: str, statement: bytes, witness: bytes) -> Attestation:
    """Prove and write the statement/witness/attestation triple."""
    try:
        att = attestor.prove(relation, statement, witness)
    except attestor.RelationRejected as exc:
        raise _reject(f"{relation} rejected: {exc.verdict.reason}: {exc.verdict.detail}") from exc
    out = Path(out_dir)
    _write(out / "statement.json", statement + b"\n")
    _write(out / "witness.json", witness + b"\n")
    _write(out / "attestation.json", att.to_bytes() + b"\n")
    return att


def _load_statement(path) -> bytes:
    data = _read_bytes(path).rstrip(b"\n")
    try:
        load_canonical(data)
    except ParseError as exc:
        raise _usage(f"{path}: {exc}") from exc
    return data


def _load_attestation(path) -> Attestation:
    try:
        return Attestation.from_bytes(_read_bytes(path))
    except ParseError as exc:
        raise _usage(f"{path}: {exc}") from exc


# -- liabilities -----------------------------------------------------------------

def _salt(seed: Optional[int], index: int) -> bytes:
    if seed is None:
        return secrets.token_bytes(32)
    return keccak256(b"ppos-salt" + seed.to_bytes(8, "big") + index.to_bytes(8, "big"))


def _tree_from_file(path) -> liabilities.LiabilityTree:
    obj = _read_json(path)
    try:
        leaves = []
        for u in obj["users"]:
            user_id, balances = liabilities.parse_liability_record(u)
            leaves.append(liabilities.make_user_leaf(user_id, balances, unhex(u["salt_hex"], 32, "salt_hex")))
        tree = liabilities.build_liability_tree(leaves)
    except (KeyError, TypeError, ValueError) as exc:
        raise _usage(f"{path}: bad tree file: {exc}") from exc
    if hexb(tree.root) != obj.get("root"):
        raise _usage(f"{path}: rebuilt root does not match the recorded root")
    return tree


def cmd_pol_build(args) -> int:
    try:
        records = liabilities.read_liability_input(_read_bytes(args.input).decode().splitlines())
    except (ParseError, UnicodeDecodeError) as exc:
        raise _usage(f"{args.input}: {exc}") from exc
    if not records:
        raise _usage(f"{args.input}: no users")
    leaves, users = [], []
    for i, (user_id, balances) in enumerate(records):
        salt = _salt(args.seed, i)
        leaves.append(liabilities.make_user_leaf(user_id, balances, salt))
        users.append({"user_id": user_id.decode(), "salt_hex": hexb(salt),
                      "balances": [{"network": a.network, "asset_hex": hexb(a.asset), "amount_decimal": str(v)}
                                   for a, v in sorted(balances.items(), key=lambda kv: kv[0].sort_key)]})
    try:
        tree = liabilities.build_liability_tree(leaves)
    except liabilities.SumOverflow as exc:
        raise _usage(str(exc)) from exc
    out = Path(args.out)
    _write_json(out / "tree.json", {"root": hexb(tree.root), "sum_leaf_index": tree.sum_leaf_index, "users": users})
    _write_json(out / "sum_leaf.json", {"sum_leaf": tree.sum_leaf.to_dict(),
                                        "path": tree.sum_leaf_path().to_dict()})
    _write_proof(out, liabilities.RELATION, tree.statement().to_bytes(), tree.witness().to_bytes())
    _emit({"root": hexb(tree.root), "sum_leaf_index": tree.sum_leaf_index, "users": len(users),
           "out": str(out)})
    return EXIT_OK


def cmd_pol_export_user(args) -> int:
    tree = _tree_from_file(args.tree)
    if args.user_id is not None:
        ids = [u.user_id_commitment for u in tree.user_leaves]
        matches = [i for i, u in enumerate(tree.user_leaves)
                   if liabilities.commit_user_id(args.user_id.encode(), u.salt) == ids[i]]
        if not matches:
            raise _usage(f"user {args.user_id!r} is not in the tree")
        index = matches[0]
    elif args.index is not None:
        index = args.index
    else:
        raise _usage("give --user-id or --index")
    try:
        bundle = liabilities.export_user_proof(tree, index)
    except merkle.IndexOutOfRange as exc:
        raise _usage(str(exc)) from exc
    _write_json(args.out, bundle.to_dict())
    _emit({"index": index, "root": hexb(bundle.root), "out": str(args.out)})
    return EXIT_OK


def cmd_pol_verify_user(args) -> int:
    try:
        bundle = liabilities.UserProofBundle.from_dict(_read_json(args.bundle))
    except ParseError as exc:
        raise _reject(f"bundle does not parse: {exc}") from exc
    root = _hex_arg(args.root, 32, "--root") if args.root else None
    verdict = liabilities.verify_user_proof(bundle, args.user_id.encode() if args.user_id else None, root)
    _emit(verdict.to_dict())
    if not verdict:
        raise _reject(f"{verdict.reason}: {verdict.detail}")
    return EXIT_OK


# -- ethereum ------------------------------------------------------------------

def _block_arg(text: str):
    if text.startswith("0x") and len(text) == 66:
        return text
    try:
        return int(text, 0)
    except ValueError:
        return text  # tags such as "latest"


def cmd_eth_record(args) -> int:
    try:
        endpoint = rpcclient.RpcEndpoint.from_config(args.config)
    except (OSError, ValueError) as exc:
        raise _usage(str(exc)) from exc
    client = rpcclient.RpcClient(endpoint)
    address = _hex_arg(args.address, 20, "--address")
    keys = [_hex_arg(k, 32, "--storage-key") for k in args.storage_key]
    if args.holder:
        keys.append(ethstate.storage_slot_key(_hex_arg(args.holder, 20, "--holder"), args.mapping_slot))
    try:
        bundle = rpcclient.fetch_account_proof(client, address, keys, _block_arg(args.block))
    except (rpcclient.Transport, rpcclient.RpcError) as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    except (rpcclient.SelfValidationFailed, rpcclient.HeaderReencodeMismatch) as exc:
        raise _reject(str(exc)) from exc
    from datetime import datetime, timezone

    rpcclient.record_fixture(bundle, args.out, client.exchanges,
                             datetime.now(timezone.utc).isoformat(timespec="seconds"))
    _emit({"block_hash": hexb(bundle.block_hash), "address": hexb(bundle.address),
           "storage_proofs": len(bundle.storage_proofs), "out": str(args.out)})
    return EXIT_OK


def _fixture(path) -> ethstate.AccountProofBundle:
    try:
        return rpcclient.load_fixture(path)
    except rpcclient.FixtureCorrupt as exc:
        raise _reject(str(exc)) from exc
    except rpcclient.SelfValidationFailed as exc:
        raise _reject(f"{path}: {exc}") from exc


def cmd_eth_prove(args) -> int:
    bundle = _fixture(args.fixture)
    stmt = ethstate.EthReserveStatement(args.min_amount, bundle.block_hash)
    _write_proof(args.out, ethstate.ETH_RELATION, stmt.to_bytes(), ethstate.eth_witness_bytes(bundle))
    _emit({"relation": ethstate.ETH_RELATION, "block_hash": hexb(bundle.block_hash), "out": str(args.out)})
    return EXIT_OK


def cmd_erc20_prove(args) -> int:
    bundle = _fixture(args.fixture)
    holder = _hex_arg(args.holder, 20, "--holder")
    stmt = ethstate.Erc20ReserveStatement(args.min_amount, bundle.block_hash, bundle.address, args.mapping_slot)
    slot = ethstate.storage_slot_key(holder, args.mapping_slot)
    bundle = ethstate.AccountProofBundle(bundle.header_rlp, bundle.proof_nodes, bundle.address, bundle.account,
                                         tuple(s for s in bundle.storage_proofs if s.key == slot))
    witness = ethstate.Erc20Witness(bundle, holder)
    _write_proof(args.out, ethstate.ERC20_RELATION, stmt.to_bytes(), witness.to_bytes())
    _emit({"relation": ethstate.ERC20_RELATION, "block_hash": hexb(stmt.block_hash),
           "token_contract": hexb(stmt.token_contract), "out": str(args.out)})
    return EXIT_OK


# -- bitcoin ---------------------------------------------------------------------

def _snapshot(path) -> btcstate.UtxoSnapshot:
    try:
        return btcstate.read_dump(_read_bytes(path).decode().splitlines())
    except (btcstate.MalformedRecord, btcstate.DuplicateOutpoint, UnicodeDecodeError) as exc:
        raise _usage(f"{path}: {exc}") from exc


def _utxo_tree(snapshot) -> btcstate.UtxoTree:
    try:
        return btcstate.build_utxo_tree(snapshot)
    except merkle.EmptyInput as exc:
        raise _usage(str(exc)) from exc


def cmd_btc_ingest(args) -> int:
    snap = _snapshot(args.dump)
    if args.out:
        _write(args.out, btcstate.write_dump(snap))
    _emit({"snapshot_block": hexb(snap.block_hash), "utxo_count": len(snap),
           "total_sats": sum(u.amount for u in snap.utxos)})
    return EXIT_OK


def cmd_btc_root(args) -> int:
    snap = _snapshot(args.dump)
    tree = _utxo_tree(snap)
    _emit({"utxo_root": hexb(tree.root), "snapshot_block": hexb(snap.block_hash), "utxo_count": tree.utxo_count,
           "depth": tree.tree.depth})
    return EXIT_OK


def cmd_btc_prove(args) -> int:
    snap = _snapshot(args.dump)
    tree = _utxo_tree(snap)
    script = _hex_arg(args.script, None, "--script")
    witness = btcstate.make_reserve_witness(tree, snap, script)
    if not witness.utxos:
        raise _reject("no UTXOs in the snapshot are locked by that script")
    stmt = btcstate.BtcReserveStatement(tree.root, snap.block_hash, args.min_amount)
    _write_proof(args.out, btcstate.RELATION, stmt.to_bytes(), witness.to_bytes())
    _emit({"relation": btcstate.RELATION, "utxo_root": hexb(tree.root), "utxos": len(witness.utxos),
           "out": str(args.out)})
    return EXIT_OK


# -- ownership and solvency ----------------------------------------------------------

def _private_key(args) -> bytes:
    if args.key_file:
        text = _read_bytes(args.key_file).decode().strip()
        if args.key_name:
            try:
                text = json.loads(text)[args.key_name]
            except (ValueError, KeyError, TypeError) as exc:
                raise _usage(f"{args.key_file}: no key {args.key_name!r}") from exc
        return _hex_arg(text, 32, "private key")
    raise _usage("give --key-file")


def cmd_ownership_sign(args) -> int:
    key = _private_key(args)
    root = _hex_arg(args.root, 32, "--root")
    message = solvency.ownership_message(args.round_id, root, args.chain_tag)
    try:
        sig = solvency.sign_ownership(key, message, args.scheme)
    except ValueError as exc:
        raise _usage(str(exc)) from exc
    out = {**sig.to_dict(), "owner_hex": hexb(solvency.owner_of(key, args.scheme))}
    if args.out:
        _write_json(args.out, out)
    _emit(out)
    return EXIT_OK


def _claim(entry: dict, base: Path) -> solvency.ReserveClaim:
    """One entry of the claims manifest.

    {asset: {network, asset}, proof_dir, signature, amount?}. ``amount``
    replaces the proof's public minimum with the exact private claim amount.
    """
    proof_dir = base / entry["proof_dir"]
    att = _load_attestation(proof_dir / "attestation.json")
    relation = att.relation
    if relation not in solvency.INNER:
        raise _usage(f"{proof_dir}: {relation} is not a reserve relation")
    parse_stmt, parse_wit, _, _ = solvency.INNER[relation]
    stmt = parse_stmt(_read_json(proof_dir / "statement.json"))
    wit = parse_wit(_read_json(proof_dir / "witness.json"))
    if "amount" in entry:
        stmt = type(stmt)(**{**stmt.__dict__, "min_amount": int(entry["amount"])})
    sig = solvency.OwnershipSignature.from_dict(_read_json(base / entry["signature"]))
    return solvency.ReserveClaim(AssetId.from_dict(entry["asset"]), relation, stmt, wit, sig)


def cmd_solvency_prove(args) -> int:
    pol = Path(args.liabilities)
    liab = liabilities.LiabilityStatement.from_obj(_read_json(pol / "statement.json"))
    sl = _read_json(pol / "sum_leaf.json")
    manifest = _read_json(args.claims)
    base = Path(args.claims).parent
    try:
        claims = tuple(_claim(e, base) for e in manifest["claims"])
        sum_leaf = liabilities.SumLeaf.from_dict(sl["sum_leaf"])
        path = merkle.MerklePath.from_dict(sl["path"])
    except (KeyError, TypeError, ValueError) as exc:
        raise _usage(f"bad claims or liabilities input: {exc}") from exc

    eth = {c.statement.block_hash for c in claims if c.relation != btcstate.RELATION}
    btc = {(c.statement.utxo_root, c.statement.snapshot_block) for c in claims if c.relation == btcstate.RELATION}
    if len(eth) > 1 or len(btc) > 1:
        raise _usage("claims reference more than one Ethereum block or UTXO snapshot")
    btc_root, btc_block = next(iter(btc), (None, None))
    stmt = solvency.SolvencyStatement(args.round_id, liab.root, liab.sum_leaf_index, next(iter(eth), None),
                                      btc_root, btc_block)
    witness = solvency.SolvencyWitness(sum_leaf, path, claims)
    _write_proof(args.out, solvency.RELATION, stmt.to_bytes(), witness.to_bytes())
    _emit({"relation": solvency.RELATION, "round_id": args.round_id, "claims": len(claims), "out": str(args.out)})
    return EXIT_OK


# -- registry --------------------------------------------------------------------

def _registry(args):
    cfg = {}
    if args.config:
        cfg = _read_json(args.config).get("registry", {})
    url = args.url or cfg.get("url")
    log_path = args.log or cfg.get("log")
    if url:
        return registry.RegistryClient(url)
    if log_path:
        try:
            return registry.Registry(log_path)
        except registry.LogCorrupt as exc:
            raise CliError(EXIT_IO, f"{log_path}: {exc}") from exc
    raise _usage("give --log or --url (or registry.log / registry.url in the config file)")


def _round_dict(rnd) -> dict:
    return rnd if isinstance(rnd, dict) else rnd.to_dict()


def _summary(rnd: dict) -> dict:
    return {"round_id": rnd["round_id"], "status": rnd["status"], "liabilities_root": rnd["liabilities_root"],
            "reserves": len(rnd["reserves"]), "verdict": rnd["verdict"]}


def cmd_registry_open(args) -> int:
    reg = _registry(args)
    rnd = reg.open_round(args.eth_block_hash, args.btc_utxo_root, args.btc_snapshot_block)
    _emit(_summary(_round_dict(rnd)))
    return EXIT_OK


def cmd_registry_submit(args) -> int:
    reg = _registry(args)
    d = Path(args.proof_dir)
    statement, att = _load_statement(d / "statement.json"), _load_attestation(d / "attestation.json")
    op = reg.submit_liabilities if att.relation == liabilities.RELATION else reg.submit_reserve
    rnd = op(args.round_id, statement, att)
    _emit(_summary(_round_dict(rnd)))
    return EXIT_OK


def cmd_registry_finalize(args) -> int:
    reg = _registry(args)
    d = Path(args.proof_dir)
    rnd = _round_dict(reg.finalize_round(args.round_id, _load_statement(d / "statement.json"),
                                         _load_attestation(d / "attestation.json")))
    _emit(_summary(rnd))
    if not rnd["verdict"]["accepted"]:
        raise _reject(f"round finalized as insolvent: {rnd['verdict']['reason']}")
    return EXIT_OK


def cmd_registry_show(args) -> int:
    reg = _registry(args)
    if args.round_id is not None:
        rnd = _round_dict(reg.get_round(args.round_id))
        _emit(rnd if args.full else _summary(rnd))
    else:
        _emit([r if args.full else _summary(r) for r in map(_round_dict, reg.list_rounds())])
    return EXIT_OK


def cmd_registry_serve(args) -> int:  # pragma: no cover - blocking loop
    reg = registry.Registry(args.log)
    server = registry.serve(reg, args.host, args.port)
    log.warning("registry listening on http://%s:%d", *server.server_address[:2])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppos", description="Private proof-of-solvency toolkit.")
    p.add_argument("--config", help="JSON config file ({rpc: {url, timeout, max_retries}, registry: {log|url}})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def cmd(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(fn=fn)
        return sp

    sp = cmd("pol-build", cmd_pol_build, "build the liabilities tree and its attestation")
    sp.add_argument("--input", required=True, help="liability input (one JSON user per line)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, help="derive salts deterministically (tests only)")

    sp = cmd("pol-export-user", cmd_pol_export_user, "export one user's inclusion bundle")
    sp.add_argument("--tree", required=True, help="tree.json written by pol-build")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--user-id")
    g.add_argument("--index", type=int)
    sp.add_argument("--out", required=True)

    sp = cmd("pol-verify-user", cmd_pol_verify_user, "verify a user inclusion bundle")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--user-id", help="also check the leaf is bound to this user id")
    sp.add_argument("--root", help="published root to compare against")

    sp = cmd("eth-record", cmd_eth_record, "fetch, verify and record an account proof fixture")
    sp.add_argument("--address", required=True)
    sp.add_argument("--block", required=True, help="number, 0x-hash or tag")
    sp.add_argument("--storage-key", action="append", default=[])
    sp.add_argument("--holder", help="token holder; adds the mapping slot key for --mapping-slot")
    sp.add_argument("--mapping-slot", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = cmd("eth-prove", cmd_eth_prove, "attest an ETH balance floor from a fixture")
    sp.add_argument("--fixture", required=True)
    sp.add_argument("--min-amount", type=int, required=True, help="public minimum, in wei")
    sp.add_argument("--out", required=True)

    sp = cmd("erc20-prove", cmd_erc20_prove, "attest an ERC20 balance floor from a fixture")
    sp.add_argument("--fixture", required=True, help="token contract fixture with the holder's storage proof")
    sp.add_argument("--holder", required=True)
    sp.add_argument("--mapping-slot", type=int, required=True)
    sp.add_argument("--min-amount", type=int, required=True)
    sp.add_argument("--out", required=True)

    sp = cmd("btc-ingest", cmd_btc_ingest, "validate and normalize a chain-state dump")
    sp.add_argument("--dump", required=True)
    sp.add_argument("--out", help="write the canonical (sorted) dump here")

    sp = cmd("btc-root", cmd_btc_root, "print the UTXO commitment root of a dump")
    sp.add_argument("--dump", required=True)

    sp = cmd("btc-prove", cmd_btc_prove, "attest a BTC balance floor for one locking script")
    sp.add_argument("--dump", required=True)
    sp.add_argument("--script", required=True, help="locking script hex")
    sp.add_argument("--min-amount", type=int, required=True, help="public minimum, in satoshi")
    sp.add_argument("--out", required=True)

    sp = cmd("ownership-sign", cmd_ownership_sign, "sign the round ownership message")
    sp.add_argument("--key-file", required=True, help="hex key file, or JSON map with --key-name")
    sp.add_argument("--key-name")
    sp.add_argument("--scheme", choices=solvency.SCHEMES, required=True)
    sp.add_argument("--round-id", type=int, required=True)
    sp.add_argument("--root", required=True, help="liabilities root hex")
    sp.add_argument("--chain-tag", required=True, help="network identifier, e.g. eth-mainnet")
    sp.add_argument("--out")

    sp = cmd("solvency-prove", cmd_solvency_prove, "attest reserves cover liabilities per asset")
    sp.add_argument("--round-id", type=int, required=True)
    sp.add_argument("--liabilities", required=True, help="pol-build output directory")
    sp.add_argument("--claims", required=True, help="claims manifest JSON")
    sp.add_argument("--out", required=True)

    def reg_cmd(name, fn, help_):
        sp = cmd(name, fn, help_)
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--log", help="event log file (in-process registry)")
        g.add_argument("--url", help="registry HTTP endpoint")
        return sp

    sp = reg_cmd("registry-open", cmd_registry_open, "open the next round")
    sp.add_argument("--eth-block-hash")
    sp.add_argument("--btc-utxo-root")
    sp.add_argument("--btc-snapshot-block")

    sp = reg_cmd("registry-submit", cmd_registry_submit, "submit a liabilities or reserve attestation")
    sp.add_argument("--round-id", type=int, required=True)
    sp.add_argument("--proof-dir", required=True)

    sp = reg_cmd("registry-finalize", cmd_registry_finalize, "submit the solvency attestation and close a round")
    sp.add_argument("--round-id", type=int, required=True)
    sp.add_argument("--proof-dir", required=True)

    sp = reg_cmd("registry-show", cmd_registry_show, "show one round or all rounds")
    sp.add_argument("--round-id", type=int)
    sp.add_argument("--full", action="store_true")

    sp = cmd("registry-serve", cmd_registry_serve, "serve a registry over HTTP")
    sp.add_argument("--log", required=True)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8645)
    return p


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except registry.RegistryError as exc:
        print(f"error: registry refused: {exc.code}: {exc.detail}", file=sys.stderr)
        return EXIT_REJECT
    except (ParseError, KeyError, TypeError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, rpcclient.Transport) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # requests errors from the registry client
        if type(exc).__module__.startswith("requests"):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        raise


def main() -> None:  # pragma: no cover
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
