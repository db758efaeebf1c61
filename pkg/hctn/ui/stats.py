"""
stats.py
--------
Calculates and renders run statistics as plain text for the CLI.
"""
from datetime import datetime

import numpy as np
import pandas as pd


def calculate_value_stats(series, name):
    """
    Calculate count, mean, min, max for a value series.

    Parameters
    ----------
    series : pd.Series
        Values (NaN allowed)
    name : str
        Label for display

    Returns
    -------
    dict
        Keys: name, count, mean, min, max
    """
    clean = series.dropna()
    if len(clean) == 0:
        return {'name': name, 'count': 0, 'mean': np.nan, 'min': np.nan, 'max': np.nan}

    return {
        'name': name,
        'count': len(clean),
        'mean': clean.mean(),
        'min': clean.min(),
        'max': clean.max(),
    }


def statistics_frame(stats):
    """One-row frame of dataset statistics, density as a percentage."""
    row = dict(stats)
    row['density_pct'] = 100.0 * row.pop('density')
    return pd.DataFrame([row])


def render_dataset_stats(stats):
    lines = [
        f"users        {stats['users']}",
        f"services     {stats['services']}",
        f"time steps   {stats['time_steps']}",
        f"records      {stats['records']}",
        f"density      {100.0 * stats['density']:.2f}%",
        f"value range  {stats['min_value']:.3f} - {stats['max_value']:.3f}",
        f"rejected     {stats['rejected']}",
    ]
    return "\n".join(lines)


def render_training_summary(post_train, metrics=None):
    """Short text block after a training run."""
    stats = post_train.stats
    lines = [f"seed {post_train.seed}: {stats['epochs']} epochs ({stats.get('stop_reason', '-')})"]
    if stats['epochs']:
        lines.append(f"  train loss {stats['first_train_loss']:.6f} -> {stats['last_train_loss']:.6f}")
        best = post_train.epoch_log['val_mae'].dropna()
        if len(best):
            lines.append(f"  best val MAE {best.min():.6f} at epoch {post_train.best_epoch}")
        else:
            lines.append(f"  no validation set; best train loss at epoch {post_train.best_epoch}")
    if metrics is not None:
        lines.append(f"  test MAE {metrics.mae:.6f}  RMSE {metrics.rmse:.6f}  ({metrics.count} records)")
    return "\n".join(lines)


def generate_sweep_text(summary, param, values, params_dict):
    """Plain-text sweep report: tested values, fixed parameters, best value."""
    lines = []
    lines.append(f"Sweep of {param}")
    lines.append("=" * 70)
    lines.append(f"Generated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    lines.append("")
    lines.append(f"{param}: {values}")
    lines.append("")
    lines.append("Fixed Parameters:")
    for key in sorted(params_dict):
        if key != param:
            lines.append(f"{key} = {params_dict[key]}")
    lines.append("")

    lines.append("=" * 70)
    lines.append("Test MAE per value")
    lines.append("=" * 70)
    for row in summary.itertuples(index=False):
        if row.status != 'ok':
            lines.append(f"{param} = {row.value}: {row.status} ({row.error})")
            continue
        line = f"{param} = {row.value}: MAE {row.mae_mean:.4f}"
        if row.runs >= 2:
            line += f" +/- {row.mae_std:.4f}, 95% CI ({row.ci95_low:.4f}, {row.ci95_high:.4f})"
        lines.append(f"{line}  [runs: {row.runs}]")

    ok = summary[summary['status'] == 'ok']
    if len(ok):
        best = ok.loc[ok['mae_mean'].idxmin()]
        lines.append("")
        lines.append(f"Best: {param} = {best['value']} (MAE {best['mae_mean']:.4f})")
    return "\n".join(lines)
