"""Longitudinal MPC alone: brake from 25 m/s to an 18 m/s reference."""

from lpvtube import default_config, solve_longitudinal_step

cfg = default_config()
lon = cfg.longitudinal_model()
mp = cfg.mpc
s, v = 0.0, 25.0
for k in range(25):
    cmd = solve_longitudinal_step(s, v, 18.0, lon, mp.eta, mp.zeta, mp.N)
    print(f"t={k * lon.t_s:4.1f} s  v={v:6.3f} m/s  a_cmd={cmd.a_cmd:+.3f} m/s^2")
    s, v = lon.step(s, v, cmd.a_cmd)
