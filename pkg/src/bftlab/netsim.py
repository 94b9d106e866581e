"""Deterministic discrete-event scheduler with scripted adversary control.

Every run is driven entirely by an ordered directive list: message delivery,
drops and delays, client timeouts, view-change signals, and Byzantine
actions. The scheduler owns all node state machines, keeps an append-only
trace of every step, and records commits omnisciently the moment a quorum of
sent messages exists. Re-running a scenario reproduces the trace byte for
byte.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from . import fab, zyzzyva
from .core import (
    NULL_REQUEST,
    ZYZZYVA,
    NodeId,
    digest,
    is_null,
    log_ops,
    parse_node,
    quorum_config,
    replica,
)


class SimError(Exception):
    """Scenario validation or execution failure."""


# --- trace -------------------------------------------------------------------

class Trace:
    """Append-only run record; serializes to stable JSON Lines."""

    def __init__(self):
        self.records: list[dict] = []

    def append(self, record: dict):
        self.records.append(record)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in self.records)

    @staticmethod
    def parse(text: str) -> list[dict]:
        return [json.loads(line) for line in text.splitlines() if line.strip()]


# --- message descriptors -----------------------------------------------------

def msg_view(msg):
    if msg.kind == "request":
        return None
    if msg.kind == "commit_request":
        return msg.cert.view
    if msg.kind == "commit_proof_msg":
        return msg.proof.view
    if msg.kind in ("view_change", "new_view", "rep"):
        return msg.new_view
    return msg.view


def _cert_desc(cert):
    if cert is None:
        return None
    return {
        "view": cert.view,
        "log": log_ops(cert.log),
        "senders": [str(s) for s in cert.senders()],
    }


def _proof_desc(proof):
    if proof is None:
        return None
    return {
        "view": proof.view,
        "value": proof.value.decode(),
        "senders": sorted(str(a.replica) for a in proof.accepted),
    }


def _pc_desc(pc):
    if pc is None:
        return None
    return {
        "view": pc.new_view,
        "reps": [
            {
                "replica": str(r.replica),
                "last_accepted": None if r.last_accepted is None else r.last_accepted.decode(),
                "commit_proof": _proof_desc(r.last_commit_proof),
            }
            for r in sorted(pc.reps, key=lambda r: r.replica)
        ],
    }


def _body(msg) -> dict:
    kind = msg.kind
    if kind == "request":
        return {"op": msg.op.decode(), "client": str(msg.client)}
    if kind == "order_req":
        return {"log": log_ops(msg.log)}
    if kind == "spec_response":
        return {"log": log_ops(msg.log), "result": msg.result}
    if kind == "commit_request":
        return {"cert": _cert_desc(msg.cert)}
    if kind == "local_commit":
        return {"log": log_ops(msg.log)}
    if kind == "view_change":
        return {"log": log_ops(msg.log), "cert": _cert_desc(msg.cert)}
    if kind == "new_view":
        return {
            "log": log_ops(msg.log),
            "proof": [
                {"replica": str(v.replica), "log": log_ops(v.log), "cert": _cert_desc(v.cert)}
                for v in msg.proof
            ],
        }
    if kind == "propose":
        return {"value": msg.value.decode(), "pc": _pc_desc(msg.pc)}
    if kind == "accepted":
        return {"value": msg.value.decode()}
    if kind == "commit_proof_msg":
        return {"proof": _proof_desc(msg.proof)}
    if kind == "rep":
        return {
            "last_accepted": None if msg.last_accepted is None else msg.last_accepted.decode(),
            "commit_proof": _proof_desc(msg.last_commit_proof),
        }
    raise SimError(f"cannot describe message kind {kind!r}")


# --- in-flight pool ------------------------------------------------------------

@dataclass
class PoolEntry:
    mid: int
    src: NodeId
    dst: NodeId
    msg: object
    ordinal: int
    rank: int
    status: str = "pending"

    def describe(self) -> dict:
        return {
            "mid": self.mid,
            "type": self.msg.kind,
            "view": msg_view(self.msg),
            "src": str(self.src),
            "dst": str(self.dst),
            "body": _body(self.msg),
        }


# --- adversary store ------------------------------------------------------------

class _Store:
    """Signed artifacts a Byzantine node has observed; reusable in new messages."""

    def __init__(self):
        self.items: list = []
        self._seen: set = set()

    def add(self, obj):
        key = obj.canon()
        if key in self._seen:
            return
        self._seen.add(key)
        self.items.append(obj)
        for sub in _components(obj):
            self.add(sub)

    def find(self, kind: str, **fields):
        out = []
        for obj in self.items:
            if getattr(obj, "kind", None) != kind:
                continue
            if all(_field_match(obj, k, v) for k, v in fields.items()):
                out.append(obj)
        return out

    def digest(self) -> str:
        return digest(b"".join(o.canon() for o in self.items))[:12]


def _components(obj):
    kind = getattr(obj, "kind", None)
    if kind == "order_req":
        return [e for e in obj.log if not is_null(e)]
    if kind == "commit_certificate":
        return list(obj.responses)
    if kind == "commit_request":
        return [obj.cert]
    if kind == "view_change":
        return ([] if obj.cert is None else [obj.cert]) + [e for e in obj.log if not is_null(e)]
    if kind == "new_view":
        return list(obj.proof) + [e for e in obj.log if not is_null(e)]
    if kind == "propose":
        return [] if obj.pc is None else [obj.pc]
    if kind == "commit_proof":
        return list(obj.accepted)
    if kind == "commit_proof_msg":
        return [obj.proof]
    if kind == "rep":
        return [] if obj.last_commit_proof is None else [obj.last_commit_proof]
    if kind == "progress_certificate":
        return list(obj.reps)
    if kind == "spec_response":
        return [e for e in obj.log if not is_null(e)]
    return []


def _field_match(obj, name, want):
    if name == "op":
        return obj.op == want.encode()
    if name == "view":
        return getattr(obj, "view", None) == want
    if name == "value":
        return getattr(obj, "value", None) == want.encode()
    raise SimError(f"unknown stored-artifact field {name!r}")


# --- the simulator ---------------------------------------------------------------

class Simulation:
    def __init__(self, scenario):
        self.scenario = scenario
        self.cfg = quorum_config(scenario.protocol, scenario.f, scenario.t)
        self.byzantine = frozenset(replica(i) for i in scenario.byzantine)
        self.trace = Trace()
        self.pool: list[PoolEntry] = []
        self.next_mid = 1
        self.seq = 0
        self.ordinals: dict[tuple, int] = {}
        self.stores = {b: _Store() for b in self.byzantine}
        self.node_rank: dict[NodeId, int] = {}
        self.delivered_rank: dict[tuple, int] = {}
        self.sent_protocol: list = []
        self.decided: set = set()

        self.replicas: dict[NodeId, object] = {}
        for i in range(self.cfg.n):
            rid = replica(i)
            if rid in self.byzantine:
                self.replicas[rid] = None
            elif scenario.protocol == ZYZZYVA:
                self.replicas[rid] = zyzzyva.ReplicaState(rid, self.cfg)
            else:
                value = scenario.inputs.get(str(rid))
                self.replicas[rid] = fab.FabReplicaState(
                    rid, self.cfg, input_value=None if value is None else value.encode()
                )
        self.clients: dict[NodeId, zyzzyva.ClientState] = {}
        for spec in scenario.clients:
            cid = NodeId("c", spec["id"])
            self.clients[cid] = zyzzyva.make_client(cid, self.cfg, spec["op"].encode())

        self.trace.append(
            {
                "seq": 0,
                "kind": "scenario",
                "name": scenario.name,
                "protocol": scenario.protocol,
                "f": scenario.f,
                "t": scenario.t,
                "n": self.cfg.n,
                "byzantine": sorted(str(b) for b in self.byzantine),
                "nodes": [str(replica(i)) for i in range(self.cfg.n)]
                + sorted(str(c) for c in self.clients),
            }
        )

    # -- plumbing --------------------------------------------------------------

    def _record(self, kind: str, node: NodeId | None, **fields) -> dict:
        self.seq += 1
        rec = {"seq": self.seq, "kind": kind, "node": None if node is None else str(node)}
        rec.update(fields)
        rec.update(emitted=[], commits=[], stuck=None, state=None)
        self.trace.append(rec)
        return rec

    def _state_digest(self, node: NodeId) -> str:
        if node in self.byzantine:
            return self.stores[node].digest()
        st = self.clients[node] if node.kind == "c" else self.replicas[node]
        return digest(repr(st).encode())[:12]

    def _send(self, rec: dict, src: NodeId, dst: NodeId, msg, rank: int):
        key = (msg.kind, str(src), str(dst))
        ordinal = self.ordinals.get(key, 0)
        self.ordinals[key] = ordinal + 1
        entry = PoolEntry(self.next_mid, src, dst, msg, ordinal, rank)
        self.next_mid += 1
        self.pool.append(entry)
        rec["emitted"].append(entry.describe())
        if msg.kind in ("spec_response", "local_commit", "accepted", "commit_proof_msg"):
            # quorum formation counts distinct senders, so one copy is enough
            if not any(m is msg for m in self.sent_protocol):
                self.sent_protocol.append(msg)
        return entry

    def _apply(self, rec: dict, node: NodeId, result):
        """Commit a transition result: new state, sends, notes."""
        state, sends, notes = result
        if node.kind == "c":
            self.clients[node] = state
        else:
            self.replicas[node] = state
        rank = self.node_rank.get(node, 0) + 1
        for dst, msg in sends:
            self._send(rec, node, dst, msg, rank)
        for note in notes:
            self._note(rec, node, note)
        self._scan_quorums(rec)
        rec["state"] = self._state_digest(node)

    def _note(self, rec: dict, node: NodeId, note):
        if isinstance(note, zyzzyva.Decision):
            depth = None
            if note.track == zyzzyva.FAST:
                ranks = [
                    self.delivered_rank.get((str(node), m), 0) for m in note.quorum
                ]
                depth = max(ranks) if ranks else None
            rec["commits"].extend(
                self._zyz_commits(note.view, note.log, note.track, str(node), depth)
            )
        elif isinstance(note, fab.FabDecision):
            rec["commits"].append(self._fab_commit(note, str(node)))
        elif isinstance(note, fab.StuckReport):
            rec["stuck"] = {
                "view": note.view,
                "leader": str(note.leader),
                "pc": _pc_desc(note.pc)["reps"],
                "candidates": [
                    {
                        "value": "<fresh>" if r["fresh"] else r["value"].decode(),
                        "vouched": r["vouched"],
                        "blocked_prepare": [v.decode() for v in r["blocked_prepare"]],
                        "blocked_proof": [v.decode() for v in r["blocked_proof"]],
                    }
                    for r in note.reports
                ],
            }

    def _zyz_commits(self, view, log, track, by, depth=None):
        out = []
        for pos, e in enumerate(log, start=1):
            null = is_null(e)
            out.append(
                {
                    "position": pos,
                    "entry": None if null else e.op.decode(),
                    "client": None if null else str(e.client),
                    "token": None if null else e.token.value,
                    "view": view,
                    "track": track,
                    "by": by,
                    "log": log_ops(log),
                    "depth": depth,
                }
            )
        return out

    def _fab_commit(self, d: fab.FabDecision, by: str) -> dict:
        return {"value": d.value.decode(), "view": d.view, "track": d.track, "by": by}

    def _scan_quorums(self, rec: dict):
        """Omniscient commits: a decision exists once a quorum has been sent."""
        if self.scenario.protocol == ZYZZYVA:
            for d in zyzzyva.check_decisions(self.sent_protocol, self.cfg):
                key = (d.view, tuple(log_ops(d.log)), d.track)
                if key in self.decided:
                    continue
                self.decided.add(key)
                rec["commits"].extend(self._zyz_commits(d.view, d.log, d.track, "quorum"))
        else:
            for d in fab.check_decision(self.sent_protocol, self.cfg):
                key = (d.view, d.value, d.track)
                if key in self.decided:
                    continue
                self.decided.add(key)
                rec["commits"].append(self._fab_commit(d, "quorum"))

    # -- pattern matching ---------------------------------------------------------

    def _pending(self):
        return [e for e in self.pool if e.status == "pending"]

    def _match(self, entry: PoolEntry, pat: dict) -> bool:
        if "type" in pat and entry.msg.kind != pat["type"]:
            return False
        if "view" in pat and msg_view(entry.msg) != pat["view"]:
            return False
        if "src" in pat and str(entry.src) != pat["src"]:
            return False
        if "dst" in pat and str(entry.dst) != pat["dst"]:
            return False
        if "ordinal" in pat and entry.ordinal != pat["ordinal"]:
            return False
        unknown = set(pat) - {"type", "view", "src", "dst", "ordinal"}
        if unknown:
            raise SimError(f"unknown pattern fields: {sorted(unknown)}")
        return True

    # -- event primitives -----------------------------------------------------------

    def client_request(self, cid: NodeId, to: NodeId):
        if cid not in self.clients:
            raise SimError(f"unknown client {cid}")
        rec = self._record("client_request", cid, to=str(to))
        st, sends, notes = zyzzyva.send_request(self.clients[cid], to)
        # a spontaneous client send is delivery rank 1
        self.node_rank.setdefault(cid, 0)
        self._apply(rec, cid, (st, sends, notes))

    def deliver(self, pattern: dict):
        matches = [e for e in self._pending() if self._match(e, pattern)]
        if not matches:
            raise SimError(f"deliver pattern matched nothing: {pattern}")
        for entry in sorted(matches, key=lambda e: e.mid):
            self._deliver_entry(entry)

    def _deliver_entry(self, entry: PoolEntry):
        entry.status = "delivered"
        msg, dst = entry.msg, entry.dst
        if not msg.verify():
            raise SimError(f"delivered message fails token verification: {msg.kind}")
        rec = self._record("deliver", dst, mid=entry.mid, msg=entry.describe())
        self.node_rank[dst] = max(self.node_rank.get(dst, 0), entry.rank)
        self.delivered_rank[(str(dst), msg)] = entry.rank
        if dst in self.byzantine:
            self.stores[dst].add(msg)
            rec["state"] = self._state_digest(dst)
            return
        if dst.kind == "c":
            if dst not in self.clients:
                raise SimError(f"message addressed to unknown client {dst}")
            handler = {
                "spec_response": zyzzyva.on_spec_response,
                "local_commit": zyzzyva.on_local_commit,
            }.get(msg.kind)
            if handler is None:
                rec["state"] = self._state_digest(dst)
                return
            self._apply(rec, dst, handler(self.clients[dst], msg))
            return
        st = self.replicas[dst]
        if self.scenario.protocol == ZYZZYVA:
            handler = {
                "request": zyzzyva.on_request,
                "order_req": zyzzyva.on_order_req,
                "commit_request": zyzzyva.on_commit_request,
                "view_change": zyzzyva.on_view_change_msg,
                "new_view": zyzzyva.on_new_view,
            }.get(msg.kind)
        else:
            handler = {
                "propose": fab.on_propose,
                "accepted": fab.on_accepted,
                "commit_proof_msg": fab.on_commit_proof_msg,
                "rep": fab.on_rep,
            }.get(msg.kind)
        if handler is None:
            raise SimError(f"replica {dst} cannot handle {msg.kind}")
        self._apply(rec, dst, handler(st, msg))

    def drop(self, pattern: dict):
        mids = []
        for entry in self._pending():
            if self._match(entry, pattern):
                entry.status = "dropped"
                mids.append(entry.mid)
        self._record("drop", None, mids=mids)

    def delay_all_except(self, pattern: dict | None):
        mids = []
        for entry in self._pending():
            if pattern is None or not self._match(entry, pattern):
                entry.status = "delayed"
                mids.append(entry.mid)
        self._record("delay", None, mids=mids)

    def timeout(self, node: NodeId):
        if node.kind != "c" or node not in self.clients:
            raise SimError(f"timeout target must be a client, got {node}")
        rec = self._record("timeout", node)
        self._apply(rec, node, zyzzyva.on_timeout(self.clients[node]))

    def view_change(self, view: int, nodes):
        for node in nodes:
            if node in self.byzantine:
                raise SimError(f"view-change signals target correct replicas, not {node}")
            rec = self._record("view_change", node, view=view)
            st = self.replicas[node]
            if self.scenario.protocol == ZYZZYVA:
                self._apply(rec, node, zyzzyva.on_view_change_signal(st, view))
            else:
                self._apply(rec, node, fab.on_view_change_signal(st, view))

    def propose(self, node: NodeId):
        if self.scenario.protocol == ZYZZYVA:
            raise SimError("propose is a FaB directive")
        rec = self._record("propose", node)
        self._apply(rec, node, fab.leader_propose(self.replicas[node]))

    # -- adversary actions ------------------------------------------------------------

    def adversary(self, actor: NodeId, action: dict):
        if actor not in self.byzantine:
            raise SimError(f"adversary actor {actor} is not Byzantine")
        kind = action["kind"]
        rec = self._record("adversary", actor, action=kind)
        rank = self.node_rank.get(actor, 0) + 1
        builder = getattr(self, f"_adv_{kind}", None)
        if builder is None:
            raise SimError(f"unknown adversary action {kind!r}")
        for dst, msg in builder(actor, action):
            self._send(rec, actor, dst, msg, rank)
        self._scan_quorums(rec)
        rec["state"] = self._state_digest(actor)

    def _stored_request(self, actor: NodeId, op):
        if op is None:
            return NULL_REQUEST
        found = self.stores[actor].find("request", op=op)
        if len(found) != 1:
            raise SimError(f"adversary {actor} has {len(found)} stored requests for op {op!r}")
        return found[0]

    def _stored_log(self, actor: NodeId, ops) -> tuple:
        return tuple(self._stored_request(actor, op) for op in ops)

    def _stored_one(self, actor: NodeId, kind: str, ref: dict):
        found = self.stores[actor].find(kind, **ref)
        if len(found) != 1:
            raise SimError(
                f"adversary {actor}: {kind} {ref} resolves to {len(found)} artifacts"
            )
        return found[0]

    def _adv_order_req(self, actor, action):
        for send in action["sends"]:
            log = self._stored_log(actor, send["log"])
            msg = zyzzyva.signed(zyzzyva.OrderReq(action["view"], log, None), actor)
            yield parse_node(send["to"]), msg

    def _adv_spec_response(self, actor, action):
        from .core import exec_result

        log = self._stored_log(actor, action["log"])
        msg = zyzzyva.signed(
            zyzzyva.SpecResponse(action["view"], log, actor, exec_result(log), None), actor
        )
        yield parse_node(action["to"]), msg

    def _adv_local_commit(self, actor, action):
        log = self._stored_log(actor, action["log"])
        msg = zyzzyva.signed(zyzzyva.LocalCommit(action["view"], log, actor, None), actor)
        yield parse_node(action["to"]), msg

    def _adv_view_change(self, actor, action):
        cert = None
        if action.get("cert") is not None:
            cert = self._stored_one(actor, "commit_certificate", action["cert"])
        log = self._stored_log(actor, action["log"])
        msg = zyzzyva.signed(
            zyzzyva.ViewChangeMessage(action["view"], actor, log, cert, None), actor
        )
        yield parse_node(action["to"]), msg

    def _adv_propose(self, actor, action):
        for send in action["sends"]:
            msg = fab.signed(
                fab.Propose(action["view"], send["value"].encode(), None, None), actor
            )
            yield parse_node(send["to"]), msg

    def _adv_accepted(self, actor, action):
        msg = fab.signed(
            fab.Accepted(action["view"], action["value"].encode(), actor, None), actor
        )
        for to in action["to"]:
            yield parse_node(to), msg

    def _adv_rep(self, actor, action):
        cp = None
        if action.get("commit_proof") is not None:
            cp = self._stored_one(actor, "commit_proof", action["commit_proof"])
        acc = action.get("last_accepted")
        msg = fab.signed(
            fab.Rep(action["view"], actor, None if acc is None else acc.encode(), cp, None),
            actor,
        )
        yield parse_node(action["to"]), msg

    def _adv_withhold(self, actor, action):
        pat = dict(action.get("match") or {})
        pat["src"] = str(actor)
        for entry in self._pending():
            if self._match(entry, pat):
                entry.status = "dropped"
        return ()

    # -- script execution --------------------------------------------------------------

    def run_script(self) -> Trace:
        for i, step in enumerate(self.scenario.script):
            try:
                self._step(step)
            except SimError as e:
                raise SimError(f"directive {i} {step.get('do')!r}: {e}") from None
        return self.trace

    def _step(self, step: dict):
        do = step["do"]
        if do == "client_request":
            self.client_request(NodeId("c", step["client"]), parse_node(step["to"]))
        elif do == "deliver":
            self.deliver(step["match"])
        elif do == "drop":
            self.drop(step["match"])
        elif do == "delay_all_except":
            self.delay_all_except(step.get("match"))
        elif do == "timeout":
            self.timeout(parse_node(step["node"]))
        elif do == "view_change":
            self.view_change(step["view"], [parse_node(n) for n in step["nodes"]])
        elif do == "propose":
            self.propose(parse_node(step["node"]))
        elif do == "adversary":
            self.adversary(replica(step["actor"]), step["action"])
        else:
            raise SimError(f"unknown directive {do!r}")


def run_scenario(scenario) -> Trace:
    """Execute a validated scenario and return its complete trace."""
    return Simulation(scenario).run_script()
