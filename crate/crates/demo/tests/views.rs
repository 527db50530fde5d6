use psmix_demo::{bootstrap_view, fit_counts_view, fit_scenario_view, scenario_names};

#[test]
fn scenario_fit_has_all_curves() {
    let view = fit_scenario_view("poisson-finite-2", 300, 11, 0.4).unwrap();
    let labels: Vec<&str> = view.curves.iter().map(|c| c.label.as_str()).collect();
    assert_eq!(labels, ["truth", "empirical", "mle", "hybrid", "wlse:0.4"]);
    for c in &view.curves {
        assert_eq!(c.values.len() as u64, view.k_max + 1);
        let total: f64 = c.values.iter().sum();
        assert!(total > 0.9, "{} sums to {total}", c.label);
        // the hybrid pmf is not renormalized and may carry slightly more than unit mass
        if c.label != "hybrid" {
            assert!(total <= 1.0 + 1e-9, "{} sums to {total}", c.label);
        }
    }
    assert!((view.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(view.n, 300);

    let again = fit_scenario_view("poisson-finite-2", 300, 11, 0.4).unwrap();
    assert_eq!(serde_json::to_string(&view).unwrap(), serde_json::to_string(&again).unwrap());
}

#[test]
fn every_registry_scenario_fits() {
    for name in scenario_names() {
        fit_scenario_view(&name, 150, 3, 0.0).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    assert!(fit_scenario_view("nope", 10, 1, 0.0).is_err());
}

#[test]
fn earthquake_band() {
    let band = bootstrap_view("builtin:earthquakes", "poisson", "param", 60, 5).unwrap();
    assert_eq!(band.k_values.len(), band.lower.len());
    assert!(band.lower.iter().zip(&band.upper).all(|(l, u)| l <= u));
    assert!(bootstrap_view("builtin:earthquakes", "poisson", "sideways", 60, 5).is_err());
}

#[test]
fn pasted_counts() {
    let view = fit_counts_view("0 5\n1 3\n4 2\n", "geometric", 0.4).unwrap();
    assert_eq!(view.n, 10);
    assert!(fit_counts_view("1\nx\n", "poisson", 0.4).unwrap_err().contains("line 2"));
}
