"""JIT rollout kernel for the sampling planner.

One fused loop per particle: clamp sampled accelerations, integrate the
double integrator, and accumulate the composed cost. Kept free of Python
objects so numba can cache a compiled version across processes.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def rollout_costs_jit(noise, mean, q0x, q0y, v0x, v0y, dt, a_max,
                      goal_active, gx, gy,
                      rects, bounds_weight, collision_penalty, robot_radius,
                      inflation_margin, inflation_weight,
                      world_w, world_h, cell_w, cell_h, res,
                      lang_active, lang_pos, lang_mask, high_cost,
                      have_cons, cons_pos, eff_vel, w_cons,
                      code_slow, code_fast, w_vel, v_ref,
                      win_active, win_y0, win_y1, win_x0, win_x1,
                      out_acc):
    K = noise.shape[0]
    H = noise.shape[1]
    costs = np.empty(K)
    inflate_to = robot_radius + inflation_margin
    n_rects = rects.shape[0]
    for k in range(K):
        qx = q0x
        qy = q0y
        vx = v0x
        vy = v0y
        c = 0.0
        for t in range(H):
            ax = mean[t, 0] + noise[k, t, 0]
            ay = mean[t, 1] + noise[k, t, 1]
            nrm = math.sqrt(ax * ax + ay * ay)
            if nrm > a_max:
                s = a_max / nrm
                ax *= s
                ay *= s
            out_acc[k, t, 0] = ax
            out_acc[k, t, 1] = ay
            vx += ax * dt
            vy += ay * dt
            mx = qx + vx * (0.5 * dt)
            my = qy + vy * (0.5 * dt)
            qx += vx * dt
            qy += vy * dt

            if goal_active:
                dxg = qx - gx
                dyg = qy - gy
                c += math.sqrt(dxg * dxg + dyg * dyg)

            bx = -qx if qx < 0.0 else (qx - world_w if qx > world_w else 0.0)
            by = -qy if qy < 0.0 else (qy - world_h if qy > world_h else 0.0)
            if bx != 0.0 or by != 0.0:
                c += bounds_weight * math.sqrt(bx * bx + by * by)

            # collision sampled at the step end and midpoint (anti-tunneling);
            # the end state also pays the soft inflation ramp
            first = True
            for px, py in ((qx, qy), (mx, my)):
                dmin2 = 1e30
                for r in range(n_rects):
                    dx = rects[r, 0] - px
                    d2 = px - rects[r, 2]
                    if d2 > dx:
                        dx = d2
                    if dx < 0.0:
                        dx = 0.0
                    dy = rects[r, 1] - py
                    d2 = py - rects[r, 3]
                    if d2 > dy:
                        dy = d2
                    if dy < 0.0:
                        dy = 0.0
                    d2 = dx * dx + dy * dy
                    if d2 < dmin2:
                        dmin2 = d2
                if n_rects > 0:
                    d = math.sqrt(dmin2)
                    if d <= robot_radius:
                        c += collision_penalty
                        break
                    elif first and d < inflate_to:
                        c += inflation_weight * (inflate_to - d)
                first = False

            if lang_active or have_cons:
                ix = int(qx / cell_w)
                if ix < 0:
                    ix = 0
                elif ix >= res:
                    ix = res - 1
                iy = int(qy / cell_h)
                if iy < 0:
                    iy = 0
                elif iy >= res:
                    iy = res - 1
                observed = True
                if win_active:
                    observed = win_y0 <= iy < win_y1 and win_x0 <= ix < win_x1
                if observed:
                    if lang_active:
                        if lang_mask[iy, ix] != 0:
                            c += lang_pos[iy, ix]
                        else:
                            c += high_cost
                    if have_cons:
                        c += w_cons * cons_pos[iy, ix]
                        d = eff_vel[iy, ix]
                        if d == code_slow:
                            c += w_vel * math.sqrt(vx * vx + vy * vy)
                        elif d == code_fast:
                            sp = math.sqrt(vx * vx + vy * vy)
                            if sp < v_ref:
                                c += w_vel * (v_ref - sp)
        costs[k] = c
    return costs
