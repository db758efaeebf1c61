"""
Run State Manager for HCTN training

Keeps the best-validation snapshot of a training session:
- the epoch it was taken at
- its validation MAE
- copies of every parameter and batch-norm buffer

so the engine can roll the model back after early stopping.
"""
from typing import Any, Dict, Optional

import numpy as np

from .exceptions import DimensionMismatchError


class RunStateManager:
    """
    Minimal best-state store for a single training session.

    Usage:
        best = RunStateManager()
        if best.is_improvement(val_mae):
            best.store(epoch, val_mae, model.copy_state())
        ...
        result = best.restore(model)
    """

    def __init__(self):
        self._run = {
            'has_state': False,
            'epoch': None,
            'val_mae': np.inf,
            'arrays': None,
        }

    def is_improvement(self, val_mae: float) -> bool:
        """Strictly better than the stored validation MAE."""
        return bool(np.isfinite(val_mae)) and val_mae < self._run['val_mae']

    def store(self, epoch: int, val_mae: float, arrays: Dict[str, np.ndarray]) -> None:
        self._run = {
            'has_state': True,
            'epoch': epoch,
            'val_mae': val_mae,
            'arrays': arrays,
        }

    def best_epoch(self) -> Optional[int]:
        return self._run['epoch']

    def restore(self, model) -> Dict[str, Any]:
        """
        Copy the stored arrays back into `model`.

        Returns
        -------
        dict
            {'success': bool, 'error': str or None}
        """
        if not self._run['has_state']:
            return {'success': False, 'error': 'no best state stored'}
        try:
            model.load_state_arrays(self._run['arrays'])
        except DimensionMismatchError as err:
            return {'success': False, 'error': str(err)}
        return {'success': True, 'error': None}
