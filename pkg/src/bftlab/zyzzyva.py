"""Skeletal Zyzzyva: fast track, two-phase track, and the view-change rules.

All state machines are pure: a transition takes (state, input) and returns
(state', sends, notes). Sends are (destination, message) pairs; notes carry
decisions for the trace layer. Sequencing, delivery and adversary behavior
live in the simulator.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .core import (
    NULL_REQUEST,
    Log,
    NodeId,
    QuorumConfig,
    Request,
    SignatureToken,
    exec_result,
    is_null,
    is_prefix,
    leader_of,
    log_canon,
    log_key,
    make_request,
    mint,
    pack,
    replica,
    token_ok,
)

FAST = "fast"
TWO_PHASE = "two_phase"


def signed(msg, signer: NodeId):
    """Fill in the token field by minting over the message payload."""
    return replace(msg, token=mint(signer, msg.payload()))


# --- messages ---------------------------------------------------------------

@dataclass(frozen=True)
class OrderReq:
    """Leader pre-prepare carrying its full request log."""

    view: int
    log: Log
    token: SignatureToken

    kind = "order_req"

    def payload(self) -> bytes:
        return pack(b"order_req", str(self.view).encode(), log_canon(self.log))

    def canon(self) -> bytes:
        return pack(self.payload(), self.token.canon())

    def verify(self) -> bool:
        return token_ok(self.token, self.token.signer, self.payload()) and all(
            is_null(e) or e.verify() for e in self.log
        )


@dataclass(frozen=True)
class SpecResponse:
    """Replica prepare: speculative result for a log it adopted."""

    view: int
    log: Log
    replica: NodeId
    result: str
    token: SignatureToken

    kind = "spec_response"

    def payload(self) -> bytes:
        return pack(
            b"spec_response",
            str(self.view).encode(),
            log_canon(self.log),
            self.replica.canon(),
            self.result.encode(),
        )

    def canon(self) -> bytes:
        return pack(self.payload(), self.token.canon())

    def verify(self) -> bool:
        return (
            self.token.signer == self.replica
            and token_ok(self.token, self.replica, self.payload())
            and self.result == exec_result(self.log)
        )


@dataclass(frozen=True)
class CommitCertificate:
    """2f+1 matching SpecResponses for one (view, log)."""

    view: int
    log: Log
    responses: tuple

    kind = "commit_certificate"

    def canon(self) -> bytes:
        return pack(
            b"commit_certificate",
            str(self.view).encode(),
            log_canon(self.log),
            *[r.canon() for r in self.responses],
        )

    def senders(self) -> tuple:
        return tuple(r.replica for r in self.responses)

    def well_formed(self, cfg: QuorumConfig) -> bool:
        if len(self.responses) != cfg.cc_quorum:
            return False
        if len(set(self.senders())) != cfg.cc_quorum:
            return False
        return all(
            r.view == self.view and r.log == self.log and r.verify()
            for r in self.responses
        )


def make_certificate(responses) -> CommitCertificate:
    rs = tuple(sorted(responses, key=lambda r: r.replica))
    return CommitCertificate(rs[0].view, rs[0].log, rs)


@dataclass(frozen=True)
class CommitRequest:
    """Client message carrying a commit certificate."""

    client: NodeId
    cert: CommitCertificate
    token: SignatureToken

    kind = "commit_request"

    def payload(self) -> bytes:
        return pack(b"commit_request", self.client.canon(), self.cert.canon())

    def canon(self) -> bytes:
        return pack(self.payload(), self.token.canon())

    def verify(self) -> bool:
        return token_ok(self.token, self.client, self.payload())


@dataclass(frozen=True)
class LocalCommit:
    """Replica commit response for a certified (view, log)."""

    view: int
    log: Log
    replica: NodeId
    token: SignatureToken

    kind = "local_commit"

    def payload(self) -> bytes:
        return pack(
            b"local_commit",
            str(self.view).encode(),
            log_canon(self.log),
            self.replica.canon(),
        )

    def canon(self) -> bytes:
        return pack(self.payload(), self.token.canon())

    def verify(self) -> bool:
        return self.token.signer == self.replica and token_ok(
            self.token, self.replica, self.payload()
        )


@dataclass(frozen=True)
class ViewChangeMessage:
    """A replica's local state shipped to the new leader."""

    new_view: int
    replica: NodeId
    log: Log
    cert: CommitCertificate | None
    token: SignatureToken

    kind = "view_change"

    def payload(self) -> bytes:
        cert = self.cert.canon() if self.cert is not None else pack(b"nocert")
        return pack(
            b"view_change",
            str(self.new_view).encode(),
            self.replica.canon(),
            log_canon(self.log),
            cert,
        )

    def canon(self) -> bytes:
        return pack(self.payload(), self.token.canon())

    def verify(self) -> bool:
        return self.token.signer == self.replica and token_ok(
            self.token, self.replica, self.payload()
        )


@dataclass(frozen=True)
class NewViewMessage:
    """New leader's proof set P plus the reconstructed base log G."""

    new_view: int
    proof: tuple
    log: Log
    token: SignatureToken

    kind = "new_view"

    def payload(self) -> bytes:
        return pack(
            b"new_view",
            str(self.new_view).encode(),
            *[vc.canon() for vc in self.proof],
            log_canon(self.log),
        )

    def canon(self) -> bytes:
        return pack(self.payload(), self.token.canon())

    def verify(self) -> bool:
        return token_ok(self.token, self.token.signer, self.payload()) and all(
            vc.verify() for vc in self.proof
        )


# --- view-change log reconstruction ------------------------------------------

def valid_cert(vc: ViewChangeMessage, cfg: QuorumConfig) -> CommitCertificate | None:
    """The certificate carried by a view-change message, if well formed."""
    if vc.cert is not None and vc.cert.well_formed(cfg):
        return vc.cert
    return None


def reconstruct_log(proof, cfg: QuorumConfig) -> Log:
    """The new leader's base-log rules, bugs included.

    1. Start from an empty log G.
    2. If any message carries a valid certificate, copy the log of the one
       with the longest log into G (ties: higher view, then smallest
       canonical bytes).
    3. If f+1 messages carry the same log, append its entries past |G|
       (among several supported logs the smallest canonical bytes wins;
       applied at most once).
    4. Pad G with null requests up to the longest log in the proof set.

    Rule 2 deliberately outranks rule 3, and rule 2 prefers length over view:
    both orderings are exactly what breaks agreement.
    """
    g: Log = ()
    certs = [c for vc in proof if (c := valid_cert(vc, cfg)) is not None]
    if certs:
        best = min(certs, key=lambda c: (-len(c.log), -c.view, c.canon()))
        g = best.log
    counts: dict[bytes, tuple] = {}
    seen: dict[bytes, int] = {}
    for vc in proof:
        key = log_canon(vc.log)
        counts[key] = vc.log
        seen[key] = seen.get(key, 0) + 1
    supported = sorted(k for k, c in seen.items() if c >= cfg.f + 1)
    if supported:
        tail = counts[supported[0]]
        if len(tail) > len(g):
            g = g + tuple(tail[len(g):])
    longest = max((len(vc.log) for vc in proof), default=0)
    if longest > len(g):
        g = g + (NULL_REQUEST,) * (longest - len(g))
    return g


# --- replica state machine ----------------------------------------------------

@dataclass(frozen=True)
class ReplicaState:
    rid: NodeId
    cfg: QuorumConfig
    view: int = 1
    log: Log = ()
    executed: int = 0  # speculative-execution watermark into log
    highest_cc: CommitCertificate | None = None
    awaiting_new_view: bool = False
    vc_seen: tuple = ()
    nv_done: tuple = ()

    def is_leader(self) -> bool:
        return leader_of(self.view, self.cfg.n) == self.rid


def _broadcast(msg, cfg: QuorumConfig):
    return tuple((replica(i), msg) for i in range(cfg.n))


def _responses(st: ReplicaState, lo: int, hi: int):
    """SpecResponses for positions lo..hi (1-based), sent to each entry's client."""
    sends = []
    for pos in range(lo, hi + 1):
        entry = st.log[pos - 1]
        if is_null(entry):
            continue
        prefix = st.log[:pos]
        resp = signed(SpecResponse(st.view, prefix, st.rid, exec_result(prefix), None), st.rid)
        sends.append((entry.client, resp))
    return tuple(sends)


def on_request(st: ReplicaState, req: Request):
    """Leader extends its log and orders the request; non-leaders ignore."""
    if not st.is_leader() or st.awaiting_new_view or not req.verify():
        return st, (), ()
    st = replace(st, log=st.log + (req,))
    msg = signed(OrderReq(st.view, st.log, None), st.rid)
    return st, _broadcast(msg, st.cfg), ()


def on_order_req(st: ReplicaState, msg: OrderReq):
    ok = (
        msg.view == st.view
        and not st.awaiting_new_view
        and msg.token.signer == leader_of(msg.view, st.cfg.n)
        and msg.verify()
        and is_prefix(st.log, msg.log)
    )
    if not ok:
        return st, (), ()
    start = st.executed
    st = replace(st, log=msg.log, executed=len(msg.log))
    return st, _responses(st, start + 1, len(st.log)), ()


def on_commit_request(st: ReplicaState, msg: CommitRequest):
    cert = msg.cert
    if not msg.verify() or not cert.well_formed(st.cfg):
        return st, (), ()
    # Retain the highest-view certificate ever validly received, even when it
    # is not for the current view; only matching-view certificates get a
    # commit response.
    if st.highest_cc is None or cert.view > st.highest_cc.view:
        st = replace(st, highest_cc=cert)
    if cert.view != st.view or st.awaiting_new_view:
        return st, (), ()
    lc = signed(LocalCommit(cert.view, cert.log, st.rid, None), st.rid)
    return st, ((msg.client, lc),), ()


def on_view_change_signal(st: ReplicaState, new_view: int):
    """Move to new_view and ship local state to its leader."""
    if new_view <= st.view:
        return st, (), ()
    vc = signed(ViewChangeMessage(new_view, st.rid, st.log, st.highest_cc, None), st.rid)
    st = replace(st, view=new_view, awaiting_new_view=True)
    return st, ((leader_of(new_view, st.cfg.n), vc),), ()


def on_view_change_msg(st: ReplicaState, msg: ViewChangeMessage):
    """New leader collecting view-change messages; emits NEW-VIEW at quorum."""
    if not msg.verify():
        return st, (), ()
    if leader_of(msg.new_view, st.cfg.n) != st.rid or msg.new_view in st.nv_done:
        return st, (), ()
    if any(v.new_view == msg.new_view and v.replica == msg.replica for v in st.vc_seen):
        return st, (), ()
    st = replace(st, vc_seen=st.vc_seen + (msg,))
    proof = tuple(v for v in st.vc_seen if v.new_view == msg.new_view)
    if len(proof) < st.cfg.vc_quorum:
        return st, (), ()
    g = reconstruct_log(proof, st.cfg)
    nv = signed(NewViewMessage(msg.new_view, proof, g, None), st.rid)
    st = replace(st, nv_done=st.nv_done + (msg.new_view,))
    return st, _broadcast(nv, st.cfg), ()


def on_new_view(st: ReplicaState, msg: NewViewMessage):
    """Adopt the leader log after re-deriving G; rolls back speculation."""
    ok = (
        msg.new_view >= st.view
        and msg.token.signer == leader_of(msg.new_view, st.cfg.n)
        and msg.verify()
        and len(msg.proof) == st.cfg.vc_quorum
        and len({vc.replica for vc in msg.proof}) == st.cfg.vc_quorum
        and all(vc.new_view == msg.new_view for vc in msg.proof)
        and msg.log == reconstruct_log(msg.proof, st.cfg)
    )
    if not ok:
        return st, (), ()
    # zero the log first: speculation up to here is rolled back and redone
    st = replace(
        st, view=msg.new_view, log=msg.log, executed=len(msg.log), awaiting_new_view=False
    )
    return st, _responses(st, 1, len(st.log)), ()


# --- client state machine ----------------------------------------------------

@dataclass(frozen=True)
class Decision:
    view: int
    log: Log
    track: str
    quorum: tuple


@dataclass(frozen=True)
class ClientState:
    cid: NodeId
    cfg: QuorumConfig
    request: Request
    responses: tuple = ()
    local_commits: tuple = ()
    cert: CommitCertificate | None = None
    decided: tuple = ()  # (view, log_key, track) markers


def make_client(cid: NodeId, cfg: QuorumConfig, op: bytes) -> ClientState:
    return ClientState(cid, cfg, make_request(op, cid))


def send_request(st: ClientState, to: NodeId):
    return st, ((to, st.request),), ()


def _groups(msgs):
    by_key: dict[tuple, list] = {}
    for m in msgs:
        by_key.setdefault((m.view, log_canon(m.log)), []).append(m)
    return by_key


def on_spec_response(st: ClientState, msg: SpecResponse):
    """Collect a prepare; fast-commit once fast_quorum match."""
    if not msg.verify():
        return st, (), ()
    if not msg.log or msg.log[-1] != st.request:
        return st, (), ()
    if any(
        r.replica == msg.replica and r.view == msg.view and r.log == msg.log
        for r in st.responses
    ):
        return st, (), ()
    st = replace(st, responses=st.responses + (msg,))
    notes = []
    for (view, _), group in _groups(st.responses).items():
        if len({m.replica for m in group}) < st.cfg.fast_quorum:
            continue
        key = (view, log_key(group[0].log), FAST)
        if key in st.decided:
            continue
        st = replace(st, decided=st.decided + (key,))
        notes.append(Decision(view, group[0].log, FAST, tuple(group)))
    return st, (), tuple(notes)


def on_timeout(st: ClientState):
    """Fast path expired: form a commit certificate and request commits."""
    if st.cert is not None:
        return st, (), ()
    best = None
    for group in _groups(st.responses).values():
        by_rep = {}
        for m in sorted(group, key=lambda m: m.replica):
            by_rep.setdefault(m.replica, m)
        if len(by_rep) < st.cfg.cc_quorum:
            continue
        cand = make_certificate(tuple(by_rep.values())[: st.cfg.cc_quorum])
        if best is None or (cand.view, len(cand.log)) > (best.view, len(best.log)):
            best = cand
    if best is None:
        return st, (), ()
    st = replace(st, cert=best)
    cr = signed(CommitRequest(st.cid, best, None), st.cid)
    return st, _broadcast(cr, st.cfg), ()


def on_local_commit(st: ClientState, msg: LocalCommit):
    """Collect commit responses; two-phase commit at commit_quorum."""
    if not msg.verify():
        return st, (), ()
    if any(
        m.replica == msg.replica and m.view == msg.view and m.log == msg.log
        for m in st.local_commits
    ):
        return st, (), ()
    st = replace(st, local_commits=st.local_commits + (msg,))
    notes = []
    for (view, _), group in _groups(st.local_commits).items():
        if len({m.replica for m in group}) < st.cfg.commit_quorum:
            continue
        key = (view, log_key(group[0].log), TWO_PHASE)
        if key in st.decided:
            continue
        st = replace(st, decided=st.decided + (key,))
        notes.append(Decision(view, group[0].log, TWO_PHASE, tuple(group)))
    return st, (), tuple(notes)


# --- omniscient decision rule --------------------------------------------------

def check_decisions(sent_messages, cfg: QuorumConfig):
    """Decisions implied by a slice of sent messages, per the quorum rules.

    Fast: fast_quorum distinct replicas sent matching SpecResponses.
    Two-phase: commit_quorum distinct replicas sent matching LocalCommits.
    """
    decisions = []
    for kind, quorum, track in (
        (SpecResponse, cfg.fast_quorum, FAST),
        (LocalCommit, cfg.commit_quorum, TWO_PHASE),
    ):
        groups: dict[tuple, dict] = {}
        for m in sent_messages:
            if isinstance(m, kind):
                groups.setdefault((m.view, log_canon(m.log)), {})[m.replica] = m
        for (view, _), by_rep in sorted(groups.items(), key=lambda kv: kv[0]):
            if len(by_rep) >= quorum:
                msgs = tuple(by_rep[r] for r in sorted(by_rep))
                decisions.append(Decision(view, msgs[0].log, track, msgs))
    return decisions
