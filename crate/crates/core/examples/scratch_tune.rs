// Scratch tuning probe (not part of the deliverable surface).

use sesim_core::constants::ELEMENTARY_CHARGE;
use sesim_core::dynamics::periodic_steady_state;
use sesim_core::SimConfig;

fn main() {
    let cfg = SimConfig::reference();
    let p = cfg.device_params();
    let mut d = cfg.drive_config();
    d.v_sd = 0.0;
    let ef = ELEMENTARY_CHARGE * d.f_p;
    let base_amp = d.amp_br;
    for k in 0..21 {
        let ratio = 1.0 + 0.1 * k as f64;
        d.amp_bl = ratio * base_amp;
        let t0 = std::time::Instant::now();
        match periodic_steady_state(&p, &d) {
            Ok(sol) => println!(
                "ratio {ratio:4.2}: I(0) = {:+8.4} ef  iters {:3}  fallback {}  ({:.0?})",
                sol.current() / ef,
                sol.diagnostics.power_iterations,
                sol.diagnostics.propagator_fallback,
                t0.elapsed()
            ),
            Err(e) => println!("ratio {ratio:4.2}: ERROR {e}"),
        }
    }
}
