"""Cascaded 3D-then-2D PAD.

The cheap photometric detector runs first and an attack verdict from it is
final. Otherwise the texture ensemble decides on the left image. This OR
cascade is a reconstruction: flat-looking opaque lenses can fool the 3D
stage, and the 2D stage tends to accept fakes, so neither may clear a sample
the other flags.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

from .errors import IrisError
from .pad2d import DEFAULT_ROI, DEFAULT_SCALES, Ensemble, ospad2d_decide
from .pad3d import IlluminationGeometry, PadOutcome, ospad3d_decide


def cascade(run3d, run2d, eager: bool = False) -> PadOutcome:
    """Combine two zero-argument detectors returning :class:`PadOutcome`.

    ``eager`` starts the 2D detector alongside the 3D one and discards its
    result when 3D says attack; verdicts are identical in both modes.
    If ``run3d`` raises an :class:`IrisError` the 2D verdict stands alone and
    the failure is recorded under ``details["degraded"]``.
    """
    future = None
    pool = None
    if eager:
        pool = ThreadPoolExecutor(max_workers=1)
        future = pool.submit(run2d)
    try:
        try:
            out3 = run3d()
            degraded = None
        except IrisError as exc:
            out3 = None
            degraded = f"{exc.stage}: {type(exc).__name__}"

        details = {"score3d": None, "decision3d": None, "decision2d": None, "degraded": degraded}
        if out3 is not None:
            details["score3d"] = out3.score
            details["decision3d"] = out3.decision
            if out3.is_attack:
                if future is not None:
                    future.cancel()
                return PadOutcome(score=1.0, decision="attack", source="fusion",
                                  threshold=0.5, details=details)
        out2 = future.result() if future is not None else run2d()
        details["decision2d"] = out2.decision
        details["score2d"] = out2.score
        return PadOutcome(score=out2.score, decision=out2.decision, source="fusion",
                          threshold=out2.threshold, details=details)
    finally:
        if pool is not None:
            pool.shutdown(wait=False, cancel_futures=True)


def ospad_fusion_decide(img_left, img_right, mask, geom: IlluminationGeometry,
                        tau3: float, ensemble: Ensemble, scales=DEFAULT_SCALES,
                        roi: int = DEFAULT_ROI, eager: bool = False, bank_dir=None) -> PadOutcome:
    return cascade(
        lambda: ospad3d_decide(img_left, img_right, mask, geom, tau3),
        lambda: ospad2d_decide(img_left, ensemble, scales, roi, bank_dir=bank_dir),
        eager=eager,
    )

