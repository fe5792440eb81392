"""Autoregressive decoding: greedy or top-k, with optional FSM logit masking.

Each sample owns its FSM and rng, so parallel calls over one frozen model are
safe. When masking is on, the FSM guarantees every emitted sequence parses;
when an unsatisfiable relationship slot forces the documented fallback the
sample is flagged rather than aborted.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import EmptyLayoutError, Layout
from .fsm import FeasibleSet, Fsm
from .model import DecodingSession, TransformerModel
from .vocab import (
    ConstraintSpec,
    ParseError,
    Task,
    TokenSequence,
    Vocabulary,
    decode_layout,
    encode_input,
)


@dataclass(frozen=True)
class SamplerConfig:
    strategy: str = "top_k"  # "greedy" | "top_k"
    k: int = 10
    temperature: float = 0.5
    max_steps: int = 121
    use_fsm: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in ("greedy", "top_k"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.max_steps < 7:
            raise ValueError(f"max_steps must cover one element, got {self.max_steps}")


@dataclass(frozen=True)
class SampleResult:
    """One decoded sample: the raw tokens plus the parsed layout when valid."""

    tokens: TokenSequence
    layout: Layout | None
    flagged: bool
    violations: tuple[str, ...]
    error: str | None

    @property
    def ok(self) -> bool:
        return self.layout is not None


def mask_logits(logits: np.ndarray, feasible: FeasibleSet | np.ndarray) -> np.ndarray:
    """Return a copy with infeasible positions at -inf. Signals an empty set
    by raising so the caller can apply the FSM fallback."""
    allowed = feasible.allowed if isinstance(feasible, FeasibleSet) else feasible
    if logits.shape[-1] != allowed.shape[-1]:
        raise ValueError(f"mask length {allowed.shape} does not match logits {logits.shape}")
    if not allowed.any():
        raise ValueError("empty feasible set; use the FSM fallback mask")
    masked = np.where(allowed, logits, -np.inf)
    return masked


def _select(logits: np.ndarray, cfg: SamplerConfig, rng: np.random.Generator) -> int:
    if cfg.strategy == "greedy":
        return int(np.argmax(logits))
    k = min(cfg.k, logits.shape[-1])
    top = np.argsort(-logits, kind="stable")[:k]
    top_logits = logits[top] / cfg.temperature
    top_logits = top_logits - top_logits.max()
    probs = np.exp(top_logits)
    probs /= probs.sum()
    return int(top[rng.choice(k, p=probs)])


def generate(
    model: TransformerModel,
    spec: ConstraintSpec,
    cfg: SamplerConfig,
    n_samples: int,
    vocab: Vocabulary,
    *,
    with_prefix: bool = False,
) -> list[SampleResult]:
    """Draw ``n_samples`` independent decodes of one constraint spec.

    Each sample owns a child seed and an FSM; all samples advance in lockstep
    through one batched incremental-decoding session, so results are
    reproducible and independent of batch composition order.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    spec.validate(vocab)
    spec = spec.canonical(vocab.categories)
    input_ids = encode_input(spec, vocab, with_prefix=with_prefix).ids

    shared_prefix: list[int] = [vocab.SOS]
    if spec.task is Task.COMPLETION:
        # The output restates the partial layout; force-feed it.
        shared_prefix.extend(encode_input(spec, vocab, with_prefix=False).ids[1:-1])

    rngs = [
        np.random.default_rng(child)
        for child in np.random.SeedSequence(cfg.seed).spawn(n_samples)
    ]
    fsms = [Fsm(spec, vocab) for _ in range(n_samples)] if cfg.use_fsm else None
    session = DecodingSession(model, input_ids, batch=n_samples)
    logits = None
    for token in shared_prefix:
        logits = session.append([token] * n_samples)
    sequences = [list(shared_prefix) for _ in range(n_samples)]
    flagged = [False] * n_samples
    active = [True] * n_samples
    budget = min(cfg.max_steps, session.capacity - session.t)
    for _ in range(budget):
        chosen = np.full(n_samples, vocab.EOS, dtype=np.int64)
        for row in range(n_samples):
            if not active[row]:
                continue
            row_logits = logits[row]
            if fsms is not None:
                fsm = fsms[row]
                before = len(fsm.violations)
                mask = fsm.decoding_mask()
                flagged[row] |= len(fsm.violations) > before
                row_logits = np.where(mask, row_logits, -np.inf)
            token = _select(row_logits, cfg, rngs[row])
            sequences[row].append(token)
            chosen[row] = token
            if fsms is not None:
                fsm.advance(token)
            if token == vocab.EOS:
                active[row] = False
        if not any(active):
            break
        logits = session.append(chosen)

    results = []
    for row in range(n_samples):
        tokens = TokenSequence(sequences[row], role="output", task=spec.task)
        try:
            layout = decode_layout(tokens, vocab)
            error = None
        except (ParseError, EmptyLayoutError) as exc:
            layout = None
            error = str(exc)
        results.append(
            SampleResult(
                tokens=tokens,
                layout=layout,
                flagged=flagged[row],
                violations=tuple(fsms[row].violations) if fsms is not None else (),
                error=error,
            )
        )
    return results


def refine(
    model: TransformerModel,
    draft: Layout,
    cfg: SamplerConfig | None,
    vocab: Vocabulary,
    *,
    with_prefix: bool = False,
) -> SampleResult:
    """Clean up a draft layout with greedy decoding.

    The FSM pins the output's categories to the draft's, in draft order;
    a passed config contributes its seed and step budget only.
    """
    cfg = replace(cfg, strategy="greedy") if cfg else SamplerConfig(strategy="greedy")
    spec = ConstraintSpec(Task.REFINEMENT, draft=draft)
    return generate(model, spec, cfg, 1, vocab, with_prefix=with_prefix)[0]


def complete(
    model: TransformerModel,
    partial: Layout,
    cfg: SamplerConfig,
    n_samples: int,
    vocab: Vocabulary,
    *,
    with_prefix: bool = False,
) -> list[SampleResult]:
    """Extend a partial layout; the given elements are force-fed verbatim."""
    spec = ConstraintSpec(Task.COMPLETION, partial=partial)
    return generate(model, spec, cfg, n_samples, vocab, with_prefix=with_prefix)
