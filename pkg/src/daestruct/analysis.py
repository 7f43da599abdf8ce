"""One-call structural analysis pipeline."""

from __future__ import annotations

from dataclasses import dataclass

from .btf import BlockPartition, LocalOffsets, coarse_btf, fine_btf, local_offsets
from .codelist import DaeModel
from .ql import QlReport, vectorized_ql
from .scheme import InitSets, basic_init_set, fine_block_init
from .sigma import (
    GlobalOffsets,
    JacobianPattern,
    SignatureMatrix,
    StructuralMetrics,
    Transversal,
    canonical_offsets,
    highest_value_transversal,
    jacobian_pattern,
    signature_matrix,
    structural_metrics,
)


@dataclass(frozen=True, eq=False)
class Analysis:
    model: DaeModel
    sm: SignatureMatrix
    hvt: Transversal
    offsets: GlobalOffsets
    pattern: JacobianPattern
    coarse: BlockPartition
    fine: BlockPartition
    local: LocalOffsets
    ql: QlReport
    metrics: StructuralMetrics
    init_basic: InitSets
    init_fine: InitSets


def analyze(model: DaeModel) -> Analysis:
    """Run the full structural pipeline on a validated model.

    Raises StructurallyIllPosed when the signature matrix has no finite
    transversal.
    """
    sm = signature_matrix(model)
    hvt = highest_value_transversal(sm)
    offsets = canonical_offsets(sm, hvt)
    pattern = jacobian_pattern(sm, offsets)
    coarse = coarse_btf(pattern)
    fine = fine_btf(pattern, hvt)
    local = local_offsets(sm, fine, offsets)
    ql = vectorized_ql(model, sm, offsets, fine, local)
    metrics = structural_metrics(sm, offsets)
    if metrics.dof != hvt.value:
        raise RuntimeError("offset/transversal accounting mismatch (internal bug)")
    init_basic = basic_init_set(offsets, ql.gamma_dae)
    init_fine = fine_block_init(local, ql.gamma_block, fine)
    return Analysis(
        model=model,
        sm=sm,
        hvt=hvt,
        offsets=offsets,
        pattern=pattern,
        coarse=coarse,
        fine=fine,
        local=local,
        ql=ql,
        metrics=metrics,
        init_basic=init_basic,
        init_fine=init_fine,
    )
