use dynsbm::identify::{
    check_conditions, joint_consecutive_edge_distribution, recover_transitions_via_phi, Theorem,
};
use dynsbm::inference::{align_labels, fit, FitConfig};
use dynsbm::likelihood::brute_force_log_likelihood;
use dynsbm::presets::Scenario;
use dynsbm::simulate::sample_network;
use dynsbm::{permute_labels, LabelPermutation, ModelParams, ObservedNetwork};

fn max_abs(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

#[test]
fn fit_recovers_node_states_of_a_separated_model() {
    let truth = Scenario::Scenario1.params();
    let sim = sample_network(&truth, 80, 11).unwrap();
    let config = FitConfig {
        n_restarts: 5,
        seed: 2,
        ..FitConfig::new(3)
    };
    let result = fit(&sim.network, &config).unwrap();
    assert!(result.max_elbo_decrease() <= 1e-8);

    // Agreement of hard labels with the latent states, up to one relabeling.
    let best = LabelPermutation::all(3)
        .map(|sigma| {
            let mut hits = 0;
            for t in 0..truth.n_times() {
                let hard = result.state.hard_labels(t);
                hits += (0..80)
                    .filter(|&i| sigma.apply(hard[i]) == sim.latent.get(t, i))
                    .count();
            }
            hits
        })
        .max()
        .unwrap();
    assert!(
        best as f64 >= 0.95 * 160.0,
        "{best} of 160 node states recovered"
    );

    let (aligned, _) = align_labels(&result.params_hat, Some(&truth)).unwrap();
    let err = (0..3)
        .map(|q| (aligned.pi()[q] - truth.pi()[q]).abs())
        .fold(0.0, f64::max);
    assert!(err < 0.2, "pi error {err}");
}

#[test]
fn params_survive_a_json_round_trip() {
    for scenario in Scenario::ALL {
        let params = scenario.params();
        let text = serde_json::to_string(&params).unwrap();
        let back: ModelParams = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        assert!(back.validate().is_valid());
    }
}

#[test]
fn exact_edge_laws_give_back_the_transitions() {
    let params = Scenario::Scenario1Inhomogeneous.params();
    assert!(check_conditions(&params, 150, 3).satisfied(Theorem::LinearIndependence));
    for t0 in 0..params.n_times() - 1 {
        let joint = joint_consecutive_edge_distribution(&params, t0).unwrap();
        let pi = params.marginal_state_law(t0);
        let rec = recover_transitions_via_phi(
            &joint,
            params.edge_probs(t0),
            params.edge_probs(t0 + 1),
            &pi,
        )
        .unwrap();
        assert!(
            max_abs(&rec.rho, params.transition(t0 + 1)) < 1e-8,
            "t0 = {t0}"
        );
    }
}

#[test]
fn likelihood_ignores_a_consistent_relabeling() {
    let params = Scenario::Scenario2.params().truncated(2).unwrap();
    let network = ObservedNetwork::new(3, 3, vec![vec![0, 1, 2], vec![2, 2, 0]]).unwrap();
    let base = brute_force_log_likelihood(&params, &network).unwrap();
    for sigma in LabelPermutation::all(3) {
        let moved = brute_force_log_likelihood(&permute_labels(&params, &sigma), &network).unwrap();
        assert!((moved - base).abs() < 1e-12);
    }
}
