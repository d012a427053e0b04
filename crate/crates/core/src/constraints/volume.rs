//! Total and stage-wise material volume.

/// `sum_e rho_e v`; the partial with respect to every `rho_e` is `v`.
pub fn total_volume(rho: &[f64], element_volume: f64) -> f64 {
    rho.iter().sum::<f64>() * element_volume
}

/// Volume deposited in each stage, `sum_e (rho^{j}_e - rho^{j-1}_e) v` for
/// `j = 1..=N`.
pub fn stage_volumes(rho_stage: &[Vec<f64>], element_volume: f64) -> Vec<f64> {
    (1..rho_stage.len())
        .map(|j| {
            rho_stage[j]
                .iter()
                .zip(&rho_stage[j - 1])
                .map(|(a, b)| a - b)
                .sum::<f64>()
                * element_volume
        })
        .collect()
}
