use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub(crate) fn z_critical(confidence: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + confidence / 2.0)
}

pub(crate) fn t_critical(confidence: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + confidence / 2.0)
}

pub(crate) fn p_normal(z: f64) -> f64 {
    2.0 * (1.0 - Normal::standard().cdf(z.abs()))
}

pub(crate) fn p_t(t: f64, dof: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
    2.0 * (1.0 - dist.cdf(t.abs()))
}
