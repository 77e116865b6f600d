"""Layout adjustment with a small MLP that maps the identity matrix to node positions.

Phase 1 fits the MLP to the original layout; phase 2 fine-tunes it against a
weighted sum of intersection, layout-preservation and link-length losses.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from .layout import Layout3D

DTYPE = torch.float64


class DegenerateLayout(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    w_int_res: float = 3.0
    w_int_node: float = 3.0
    w_int_nonres: float = 1.0
    w_pos: float = 1.0
    w_len: float = 1.0

    def __post_init__(self):
        if min(asdict(self).values()) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.w_int_res <= 0 or self.w_int_node <= 0:
            raise ValueError("w_int_res and w_int_node must be positive")

    def escalated(self, factor: float = 3.0) -> "LossWeights":
        return LossWeights(self.w_int_res * factor, self.w_int_node * factor,
                           self.w_int_nonres, self.w_pos, self.w_len)


@dataclass
class AdjustmentReport:
    j_int_res: float
    j_int_node: float
    j_int_nonres: float
    j_pos: float
    j_len: float
    primary_goal_met: bool
    epochs_phase1: int = 0
    epochs_phase2: int = 0
    phase1_loss: float = math.nan
    retries: int = 0
    weights: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v)
                for k, v in asdict(self).items()}


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


def segment_distance(p1, q1, p2, q2, eps: float = 1e-12):
    """Minimum distance between 3D segments p1-q1 and p2-q2 (batched over leading dims).

    Closed form with clamping; near-parallel pairs fall back to projecting an
    endpoint, which still yields the exact minimum after the clamp step.
    """
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = (d1 * d1).sum(-1)
    e = (d2 * d2).sum(-1)
    f = (d2 * r).sum(-1)
    c = (d1 * r).sum(-1)
    b = (d1 * d2).sum(-1)
    denom = a * e - b * b
    safe_a = torch.where(a > eps, a, torch.ones_like(a))
    safe_e = torch.where(e > eps, e, torch.ones_like(e))
    parallel = denom <= eps * a * e + eps
    safe_denom = torch.where(parallel, torch.ones_like(denom), denom)
    s = torch.where(parallel, torch.zeros_like(a), ((b * f - c * e) / safe_denom).clamp(0.0, 1.0))
    t = (b * s + f) / safe_e
    s = torch.where(t < 0, (-c / safe_a).clamp(0.0, 1.0), s)
    s = torch.where(t > 1, ((b - c) / safe_a).clamp(0.0, 1.0), s)
    t = t.clamp(0.0, 1.0)
    s = torch.where(a > eps, s, torch.zeros_like(s))
    t = torch.where(e > eps, t, torch.zeros_like(t))
    diff = (p1 + d1 * s[..., None]) - (p2 + d2 * t[..., None])
    # smooth at zero so coincident axes keep a finite gradient
    return torch.sqrt((diff * diff).sum(-1) + 1e-18)


def _link_pairs(edges_a, edges_b=None):
    """Index pairs of links that share no endpoint; within one set, unordered pairs once."""
    out = []
    if edges_b is None:
        for i in range(len(edges_a)):
            for j in range(i + 1, len(edges_a)):
                if not set(edges_a[i]) & set(edges_a[j]):
                    out.append((i, j))
    else:
        for i in range(len(edges_a)):
            for j in range(len(edges_b)):
                if not set(edges_a[i]) & set(edges_b[j]):
                    out.append((i, j))
    return out


class LossTerms:
    """Precomputed index sets for the five adjustment losses on one network."""

    def __init__(self, edges, resistor_edges, node_radius: float, link_radius: float):
        res = {tuple(sorted(e)) for e in resistor_edges}
        edges = [tuple(sorted(e)) for e in edges]
        self.all_edges = torch.tensor(edges, dtype=torch.long).reshape(-1, 2)
        self.res_edges = [e for e in edges if e in res]
        self.nonres_edges = [e for e in edges if e not in res]
        self.node_radius = node_radius
        self.link_radius = link_radius
        self.res_pairs = self._pairs(self.res_edges, self.res_edges, _link_pairs(self.res_edges))
        # a pair involving any non-resistor link counts as non-conductive
        nn_pairs = self._pairs(self.nonres_edges, self.nonres_edges, _link_pairs(self.nonres_edges))
        rn_pairs = self._pairs(self.res_edges, self.nonres_edges,
                               _link_pairs(self.res_edges, self.nonres_edges))
        self.nonres_pairs = (torch.cat([nn_pairs[0], rn_pairs[0]]),
                             torch.cat([nn_pairs[1], rn_pairs[1]]))

    @staticmethod
    def _pairs(ea, eb, pairs):
        if not pairs:
            return torch.zeros((0, 2), dtype=torch.long), torch.zeros((0, 2), dtype=torch.long)
        ia = torch.tensor([ea[i] for i, _ in pairs], dtype=torch.long)
        ib = torch.tensor([eb[j] for _, j in pairs], dtype=torch.long)
        return ia, ib

    def link_intersection(self, pos, pairs):
        ia, ib = pairs
        if len(ia) == 0:
            return pos.sum() * 0.0
        d = segment_distance(pos[ia[:, 0]], pos[ia[:, 1]], pos[ib[:, 0]], pos[ib[:, 1]])
        return torch.relu(2 * self.link_radius - d).sum()

    def node_intersection(self, pos):
        n = pos.shape[0]
        if n < 2:
            return pos.sum() * 0.0
        iu, ju = torch.triu_indices(n, n, offset=1)
        diff = pos[iu] - pos[ju]
        d = torch.sqrt((diff * diff).sum(-1) + 1e-18)
        return torch.relu(2 * self.node_radius - d).sum()

    def length_std(self, pos):
        if len(self.all_edges) == 0:
            return pos.sum() * 0.0
        e = self.all_edges
        diff = pos[e[:, 0]] - pos[e[:, 1]]
        lengths = torch.sqrt((diff * diff).sum(-1))
        var = ((lengths - lengths.mean()) ** 2).mean()
        safe = torch.where(var > 0, var, torch.ones_like(var))
        return torch.where(var > 0, torch.sqrt(safe), torch.zeros_like(var))

    def evaluate(self, pos, p_orig, alignment=None) -> dict:
        return {
            "j_int_res": self.link_intersection(pos, self.res_pairs),
            "j_int_node": self.node_intersection(pos),
            "j_int_nonres": self.link_intersection(pos, self.nonres_pairs),
            "j_pos": procrustes_torch(p_orig, pos, alignment),
            "j_len": self.length_std(pos),
        }


def weighted_total(terms: dict, w: LossWeights):
    return (w.w_int_res * terms["j_int_res"] + w.w_int_node * terms["j_int_node"]
            + w.w_int_nonres * terms["j_int_nonres"] + w.w_pos * terms["j_pos"]
            + w.w_len * terms["j_len"])


def intersection_loss(elements, kind: str, layout: Layout3D) -> float:
    """Summed penetration depth over element pairs of one kind.

    ``elements`` are node ids for ``kind="nodes"`` and (u, v) links otherwise.
    Links sharing an endpoint are never compared.
    """
    pos = torch.as_tensor(layout.positions, dtype=DTYPE)
    if kind == "nodes":
        idx = torch.as_tensor(list(elements), dtype=torch.long)
        terms = LossTerms([], [], layout.node_radius, layout.link_radius)
        return float(terms.node_intersection(pos[idx]))
    if kind not in ("resistor_links", "nonresistor_links"):
        raise ValueError(f"unknown element kind {kind}")
    edges = [tuple(sorted(e)) for e in elements]
    terms = LossTerms(edges, edges, layout.node_radius, layout.link_radius)
    return float(terms.link_intersection(pos, terms.res_pairs))


# ---------------------------------------------------------------------------
# Procrustes
# ---------------------------------------------------------------------------


def procrustes_alignment(p_orig: np.ndarray, p_new: np.ndarray, strict: bool = True):
    """Similarity (scale, orthogonal matrix incl. reflections, centroids) mapping p_new onto p_orig.

    With ``strict=False`` a collinear reference is accepted: the rotation about the
    line is then arbitrary but the residual is still well defined.
    """
    a = np.asarray(p_orig, dtype=float)
    b = np.asarray(p_new, dtype=float)
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    a0, b0 = a - mu_a, b - mu_b
    norm_a, norm_b = (a0 * a0).sum(), (b0 * b0).sum()
    if norm_a <= 1e-24:
        raise DegenerateLayout("reference layout is degenerate (coincident points)")
    if strict and np.linalg.matrix_rank(a0, tol=1e-9 * math.sqrt(norm_a)) < 2:
        raise DegenerateLayout("reference layout is degenerate (collinear or coincident)")
    if norm_b <= 1e-24:
        raise DegenerateLayout("adjusted layout collapsed to a point")
    u, sig, vt = np.linalg.svd(b0.T @ a0)
    rot = u @ vt
    scale = sig.sum() / norm_b
    return scale, rot, mu_a, mu_b


def procrustes_loss(p_orig, p_new) -> float:
    """Sum of squared per-node distances after aligning p_new onto p_orig (mm^2)."""
    scale, rot, mu_a, mu_b = procrustes_alignment(p_orig, p_new)
    a0 = np.asarray(p_orig, dtype=float) - mu_a
    aligned = scale * (np.asarray(p_new, dtype=float) - mu_b) @ rot
    return float(((a0 - aligned) ** 2).sum())


def procrustes_torch(p_orig, pos, alignment=None):
    """Differentiable Procrustes loss with the alignment held constant (stop-gradient)."""
    if alignment is None:
        alignment = procrustes_alignment(p_orig, pos.detach().cpu().numpy(), strict=False)
    scale, rot, mu_a, mu_b = alignment
    a0 = torch.as_tensor(np.asarray(p_orig) - mu_a, dtype=pos.dtype)
    aligned = scale * (pos - torch.as_tensor(mu_b, dtype=pos.dtype)) @ torch.as_tensor(rot, dtype=pos.dtype)
    diff = a0 - aligned
    return (diff * diff).sum()


def length_uniformity_loss(layout: Layout3D, links) -> float:
    lengths = layout.link_lengths(links)
    if len(lengths) == 0:
        raise ValueError("need at least one link")
    return float(np.std(lengths))


# ---------------------------------------------------------------------------
# model and training
# ---------------------------------------------------------------------------


class LayoutMLP(nn.Module):
    """I_N -> three ReLU hidden layers -> (N, 3) positions, de-normalized to the original frame."""

    def __init__(self, n_nodes: int, p_orig, hidden: int = 100, seed: int = 0):
        super().__init__()
        self.n_nodes = n_nodes
        p = np.asarray(p_orig, dtype=float)
        center = p.mean(axis=0)
        scale = float(np.sqrt(((p - center) ** 2).sum(axis=1).mean())) or 1.0
        self.register_buffer("center", torch.as_tensor(center, dtype=DTYPE))
        self.register_buffer("scale", torch.tensor(scale, dtype=DTYPE))
        self.register_buffer("eye", torch.eye(n_nodes, dtype=DTYPE))
        self.net = nn.Sequential(
            nn.Linear(n_nodes, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, 3),
        ).to(DTYPE)
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for layer in self.net:
                if isinstance(layer, nn.Linear):
                    bound = 1.0 / math.sqrt(layer.in_features)
                    layer.weight.uniform_(-bound, bound, generator=gen)
                    layer.bias.uniform_(-bound, bound, generator=gen)

    def forward(self) -> torch.Tensor:
        # row i of the identity input is node i's one-hot code
        out = self.net(self.eye)
        return out * self.scale + self.center

    def positions(self) -> np.ndarray:
        with torch.no_grad():
            return self().numpy().copy()


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    phase1_epochs: int = 5000
    phase1_tol: float = 1e-3  # fraction of the bounding-box diagonal
    phase2_epochs: int = 10_000
    early_stop: int = 500
    seed: int = 0


def bbox_diagonal(p) -> float:
    p = np.asarray(p)
    return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))


def train_phase1(model: LayoutMLP, p_orig, epochs: int = 5000, lr: float = 1e-3,
                 tol: float = 1e-3) -> tuple[LayoutMLP, int, float]:
    """Fit the MLP output to the original layout; returns (model, epochs run, final loss).

    The fit minimizes the mean squared offset to ``p_orig``, which has a vanishing
    gradient at the optimum; the reported loss and the stop test use the Procrustes
    residual against ``tol`` times the bounding-box diagonal.
    """
    target = tol * bbox_diagonal(p_orig)
    ref = torch.as_tensor(np.asarray(p_orig, dtype=float), dtype=DTYPE)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_val = math.inf
    epoch = 0
    for epoch in range(1, epochs + 1):
        opt.zero_grad()
        pos = model()
        loss_val = float(procrustes_torch(p_orig, pos.detach()))
        if loss_val <= target:
            break
        loss = ((pos - ref) ** 2).sum(dim=1).mean()
        loss.backward()
        opt.step()
    return model, epoch, loss_val


def _as_report(terms: dict, **extra) -> AdjustmentReport:
    vals = {k: float(v) for k, v in terms.items()}
    met = vals["j_int_res"] == 0.0 and vals["j_int_node"] == 0.0
    return AdjustmentReport(**vals, primary_goal_met=met, **extra)


def train_phase2(model: LayoutMLP, terms: LossTerms, p_orig, weights: LossWeights,
                 epochs: int = 10_000, lr: float = 1e-3, early_stop: int = 500):
    """Minimize the weighted loss; stop once the primary goal has held for ``early_stop`` epochs.

    Returns (positions, report); the last primary-goal-satisfying iterate is
    preferred over a final iterate that violates it.
    """
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    streak = 0
    last_ok = None
    epoch = 0
    for epoch in range(1, epochs + 1):
        opt.zero_grad()
        pos = model()
        vals = terms.evaluate(pos, p_orig)
        ok = float(vals["j_int_res"].detach()) == 0.0 and float(vals["j_int_node"].detach()) == 0.0
        if ok:
            last_ok = pos.detach().numpy().copy()
            streak += 1
            if streak >= early_stop:
                break
        else:
            streak = 0
        weighted_total(vals, weights).backward()
        opt.step()
    final = model.positions()
    with torch.no_grad():
        vals = terms.evaluate(torch.as_tensor(final), p_orig)
    report = _as_report(vals, epochs_phase2=epoch, weights=asdict(weights))
    if not report.primary_goal_met and last_ok is not None:
        final = last_ok
        with torch.no_grad():
            vals = terms.evaluate(torch.as_tensor(final), p_orig)
        report = _as_report(vals, epochs_phase2=epoch, weights=asdict(weights))
    return final, report


def _restore_scale(final: np.ndarray, res_edges, min_length: float) -> np.ndarray:
    """Scale up about the centroid if resistor links shrank below ``min_length``.

    Enlarging a layout only separates fixed-radius solids, so this never adds intersections.
    """
    if not res_edges or min_length <= 0:
        return final
    e = np.asarray(res_edges)
    shortest = np.linalg.norm(final[e[:, 0]] - final[e[:, 1]], axis=1).min()
    if shortest >= min_length:
        return final
    center = final.mean(axis=0)
    return center + (final - center) * (min_length / shortest)


def adjust_layout(layout: Layout3D, edges, resistor_edges, weights: LossWeights = LossWeights(),
                  cfg: TrainConfig = TrainConfig(), retry: bool = True):
    """Two-phase adjustment with one automatic x3 intersection-weight retry."""
    p_orig = layout.positions
    terms = LossTerms(edges, resistor_edges, layout.node_radius, layout.link_radius)
    if len(p_orig) < 2:
        with torch.no_grad():
            pos = torch.as_tensor(p_orig, dtype=DTYPE)
            vals = {"j_int_res": 0.0, "j_int_node": 0.0, "j_int_nonres": 0.0, "j_pos": 0.0,
                    "j_len": float(terms.length_std(pos))}
        return Layout3D(p_orig.copy(), layout.node_radius, layout.link_radius), _as_report(
            vals, weights=asdict(weights))
    torch.manual_seed(cfg.seed)
    model = LayoutMLP(len(p_orig), p_orig, seed=cfg.seed)
    model, ep1, loss1 = train_phase1(model, p_orig, cfg.phase1_epochs, cfg.lr, cfg.phase1_tol)
    fitted = copy.deepcopy(model.state_dict())

    final, report = train_phase2(model, terms, p_orig, weights, cfg.phase2_epochs, cfg.lr, cfg.early_stop)
    retries = 0
    if not report.primary_goal_met and retry:
        retries = 1
        model.load_state_dict(fitted)
        final, report = train_phase2(model, terms, p_orig, weights.escalated(3.0),
                                     cfg.phase2_epochs, cfg.lr, cfg.early_stop)

    res = [tuple(e) for e in terms.res_edges]
    if res:
        min_orig = float(np.min(layout.link_lengths(res)))
        final = _restore_scale(final, res, min_orig)
    with torch.no_grad():
        vals = terms.evaluate(torch.as_tensor(final), p_orig)
    report = _as_report(vals, epochs_phase1=ep1, epochs_phase2=report.epochs_phase2,
                        phase1_loss=loss1, retries=retries, weights=report.weights)
    return Layout3D(final, layout.node_radius, layout.link_radius), report


def conductive_intersections(layout: Layout3D, edges, resistor_edges) -> tuple[float, float]:
    """(J_int^res, J_int^node) for a finished layout."""
    terms = LossTerms(edges, resistor_edges, layout.node_radius, layout.link_radius)
    pos = torch.as_tensor(layout.positions, dtype=DTYPE)
    with torch.no_grad():
        return float(terms.link_intersection(pos, terms.res_pairs)), float(terms.node_intersection(pos))


def save_report(report: AdjustmentReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
