//! Benchmark inputs shared by the criterion benches.

use loadtrack_core::PowerProfile;

/// A smooth synthetic day: zero at night, a sine-shaped bump peaking at 1.
pub fn synthetic_day(dt: f64, day_length: f64) -> PowerProfile {
    let samples = (day_length / dt).round() as usize;
    let values = (0..=samples)
        .map(|k| {
            let x = (k as f64 * dt - 21_600.0) / 43_200.0;
            if (0.0..=1.0).contains(&x) {
                (std::f64::consts::PI * x).sin().powf(1.2)
            } else {
                0.0
            }
        })
        .collect();
    PowerProfile::new(values, dt, 0.0).expect("non-empty profile")
}
