"""Orientation filter behavior on controlled motion.

Shows the three things the filter has to get right: converging to a
static tilt from a wrong initial guess, ignoring the accelerometer while
its magnitude is far from 1 g (gating), and integrating gyro rates
through a rotation.

Run:  python3 demos/02_orientation_tilt.py
"""

import math

import numpy as np

from fallsense.orientation import (
    FilterConfig,
    FilterState,
    estimate_orientation,
    predict_step,
    quat_from_rotvec,
    quat_to_matrix,
    tilt_angles,
    update_step,
)

# --- 1. static convergence ---------------------------------------------
phi = math.radians(40.0)
q_true = quat_from_rotvec(np.array([phi, 0.0, 0.0]))
up_body = quat_to_matrix(q_true).T @ np.array([0.0, 0.0, 1.0])

n = 400  # 2 s at 200 Hz
accel = np.tile(up_body, (n, 1)) + np.random.default_rng(0).normal(
    0, 0.01, (n, 3))
quats = estimate_orientation(accel, np.zeros((n, 3)))
theta = np.degrees(tilt_angles(quats))
print("static 40-degree tilt, noisy accelerometer:")
for k in (0, 10, 100, n - 1):
    print(f"  sample {k:4d}: estimated tilt {theta[k]:7.3f} deg")

# --- 2. gating ----------------------------------------------------------
state = FilterState(q=np.array([1.0, 0, 0, 0]), P=np.eye(3) * 0.05,
                    config=FilterConfig())
spike = np.array([0.0, 0.0, 3.0])  # 3 g impact transient
after = update_step(state, spike)
print(f"\n3 g transient: update skipped -> state unchanged: {after is state}")

# --- 3. gyro integration -------------------------------------------------
state = FilterState(q=np.array([1.0, 0, 0, 0]), P=np.eye(3) * 0.01)
for _ in range(200):                      # 1 s at 200 Hz
    state = predict_step(state, np.array([0.0, 0.0, 90.0]), 1 / 200)
w, x, y, z = state.q
print(f"\n90 deg/s about z for 1 s from identity:")
print(f"  quaternion ({w:.4f}, {x:.4f}, {y:.4f}, {z:.4f}) "
      f"(expect (0.7071, 0, 0, 0.7071))")
print(f"  norm deviation {abs(np.linalg.norm(state.q) - 1):.2e}")
