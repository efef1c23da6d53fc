use crate::config::SpeedParams;

/// Operating speed in km/h at minute `t` for a route whose off-peak speed
/// is `v_off`. Two Gaussian dips centred on the peaks, floored at `v_min`.
pub fn speed_at(params: &SpeedParams, v_off: f64, t: f64) -> f64 {
    let dip = |centre: f64| {
        let z = (t - centre) / params.sigma;
        (-z * z).exp()
    };
    let v = v_off * (1.0 - params.k * (dip(params.t_m) + dip(params.t_e)));
    v.max(params.v_min)
}

/// Distance in metres covered in one step that starts at minute `t`.
pub fn step_distance_m(params: &SpeedParams, v_off: f64, t: f64, step_min: u32) -> f64 {
    speed_at(params, v_off, t) * 1000.0 * step_min as f64 / 60.0
}
