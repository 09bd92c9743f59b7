"""Evaluation quantities: attack success rates, detection quality, dropout
ratio, and round-time statistics, all pure functions of run logs."""

from __future__ import annotations

import numpy as np


def asr_targeted(predictions, truth, attacked_label: int) -> float:
    """Share of the whole test set that is an attacked-class sample predicted
    as some other class. Bounded above by the attacked class's prevalence."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    if len(truth) == 0:
        raise ValueError("empty test set")
    hit = (truth == attacked_label) & (predictions != attacked_label)
    return float(hit.sum() / len(truth))


def asr_targeted_classwise(predictions, truth, attacked_label: int) -> float:
    """Companion rate normalized by the attacked class size (1 - class recall)."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    mask = truth == attacked_label
    if not mask.any():
        raise ValueError(f"no samples of class {attacked_label} in the test set")
    return float((predictions[mask] != attacked_label).mean())


def asr_untargeted(acc_no_attack: float, acc_under_attack: float) -> float:
    """Relative accuracy change |A1 - A2| / A1 against the paired clean run."""
    if acc_no_attack <= 0:
        raise ValueError("clean-run accuracy must be positive")
    return abs(acc_no_attack - acc_under_attack) / acc_no_attack


def detection_rates(flagged, truly_malicious, evaluated_pool):
    """(false-positive rate, false-negative rate) over one round's filter entrants.

    honest = evaluated_pool minus the planted malicious set. Either rate is
    None when its denominator is empty (no honest or no malicious entrants).
    """
    flagged = set(flagged)
    malicious = set(truly_malicious) & set(evaluated_pool)
    pool = set(evaluated_pool)
    if not flagged <= pool:
        raise ValueError("flagged ids must come from the evaluated pool")
    honest = pool - malicious
    fp = len(flagged & honest) / len(honest) if honest else None
    fn = len(malicious - flagged) / len(malicious) if malicious else None
    return fp, fn


def dropout_ratio(round_logs) -> float:
    """Dropped-out outcomes over all selection slots of the run."""
    if not round_logs:
        raise ValueError("empty run")
    dropped = sum(entry.dropouts for entry in round_logs)
    slots = sum(entry.selection_slots for entry in round_logs)
    return dropped / slots if slots else 0.0


def average_round_time(round_logs) -> float:
    """Mean round duration, excluding canceled rounds."""
    times = [entry.round_time_s for entry in round_logs if not entry.canceled]
    if not times:
        raise ValueError("every round was canceled; no round time to average")
    return float(np.mean(times))
