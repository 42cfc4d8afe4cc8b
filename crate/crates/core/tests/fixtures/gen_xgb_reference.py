"""Regenerates xgb_reference.json with XGBoost's exact-greedy tree method.

Feature values are multiples of 1/256 so every split midpoint is exactly
representable in f32 as well as f64.

    python3 gen_xgb_reference.py > xgb_reference.json
"""
import json

import numpy as np
import xgboost as xgb

rng = np.random.default_rng(20231010)
n, d = 50, 5
x = rng.integers(0, 1024, size=(n, d)).astype(np.float64) / 256.0
logit = 1.5 * (x[:, 0] - 2.0) - 1.0 * (x[:, 2] - 2.0) + 0.8 * np.sin(3.0 * x[:, 4])
y = (logit + rng.normal(0.0, 0.7, size=n) > 0.0).astype(np.float64)

params = {
    "objective": "binary:logistic",
    "tree_method": "exact",
    "eta": 0.1,
    "max_depth": 3,
    "lambda": 1.0,
    "alpha": 0.0,
    "gamma": 0.0,
    "min_child_weight": 1.0,
    "max_delta_step": 0.0,
    "subsample": 1.0,
    "colsample_bytree": 1.0,
    "base_score": 0.5,
    "nthread": 1,
    "seed": 0,
}
dtrain = xgb.DMatrix(x, label=y)
booster = xgb.train(params, dtrain, num_boost_round=10)
proba = booster.predict(dtrain)

print(json.dumps({
    "generator": f"xgboost {xgb.__version__}",
    "params": {"rounds": 10, "learning_rate": 0.1, "max_depth": 3, "reg_lambda": 1.0,
               "gamma": 0.0, "min_child_weight": 1.0},
    "features": x.tolist(),
    "labels": [int(v) for v in y],
    "probabilities": [float(p) for p in proba],
}, indent=1))
