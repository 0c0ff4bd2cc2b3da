use super::*;
use crate::basefn::cosine_similarity;
use crate::executor::{execute_plan, ExecProviders};
use crate::guideline::{enumerate_paths, path_text, shipped};
use crate::planner::{plan_loop, FunctionRegistry};

fn liver_spec(lesions: Vec<LesionSpec>, flags: &[(&str, bool)]) -> SyntheticSpec {
    SyntheticSpec {
        seed: 0xabcd,
        organ: "liver".to_string(),
        dims: Dims::new(40, 40, 40).unwrap(),
        spacing_mm: [1.0, 1.0, 1.0],
        lesions,
        patient: PatientRecord {
            patient_id: "pt".to_string(),
            age_years: 50,
            sex: "F".to_string(),
            flags: flags.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            phase: Phase::Venous,
        },
    }
}

fn lesion(center: [f64; 3], diameter_mm: f64, category: &str) -> LesionSpec {
    LesionSpec {
        center_mm: center,
        diameter_mm,
        category: category.to_string(),
    }
}

#[test]
fn zero_lesion_case_is_pure_background() {
    let tree = shipped::liver();
    let case = gen_case(&liver_spec(vec![], &[]), &tree).unwrap();
    assert!(case
        .volume
        .voxels()
        .iter()
        .all(|&v| v == BACKGROUND_HU || v == ORGAN_HU));
    assert!(case.oracle.per_lesion.is_empty());
    assert_eq!(case.oracle.aggregated.leaf_id, "leaf_none");
    assert_eq!(case.facts.text, "No focal liver lesions identified.");
}

#[test]
fn small_benign_lesion_matches_the_low_risk_branch() {
    let tree = shipped::liver();
    let spec = liver_spec(vec![lesion([20.0, 20.0, 20.0], 7.0, "benign")], &[]);
    let case = gen_case(&spec, &tree).unwrap();
    assert_eq!(
        case.oracle.aggregated.recommendation,
        "Benign; no further follow-up."
    );
    // the same spec with a high-risk patient lands on the MRI branch
    let spec = liver_spec(
        vec![lesion([20.0, 20.0, 20.0], 7.0, "benign")],
        &[("known_malignancy", true)],
    );
    let case = gen_case(&spec, &tree).unwrap();
    assert_eq!(
        case.oracle.aggregated.recommendation,
        "Liver MRI in 3--6 months."
    );
}

#[test]
fn generated_case_reproduces_its_oracle_end_to_end() {
    let tree = shipped::liver();
    let spec = liver_spec(
        vec![
            lesion([13.0, 13.0, 13.0], 12.4, "suspicious"),
            lesion([28.0, 28.0, 28.0], 7.0, "benign"),
        ],
        &[("cirrhosis", true)],
    );
    let case = gen_case(&spec, &tree).unwrap();

    let registry = FunctionRegistry::default();
    let plan = plan_loop(&tree, &registry, 3).unwrap();
    let provider = PhantomLabelProvider::for_tree(&tree, 7).unwrap();
    let result = execute_plan(
        &plan,
        &tree,
        &case.volume,
        &case.spec.patient,
        &ExecProviders {
            embedding: &provider,
        },
    )
    .unwrap();

    assert_eq!(result.per_lesion.len(), case.oracle.per_lesion.len());
    for (got, want) in result.per_lesion.iter().zip(&case.oracle.per_lesion) {
        assert_eq!(got.lesion_id, want.lesion_id);
        assert_eq!(got.path, want.path);
    }
    assert_eq!(result.aggregated.path, case.oracle.aggregated.path);
}

#[test]
fn spec_violations_are_rejected() {
    let tree = shipped::liver();
    // overlapping lesions
    let spec = liver_spec(
        vec![
            lesion([20.0, 20.0, 20.0], 10.0, "benign"),
            lesion([24.0, 20.0, 20.0], 10.0, "benign"),
        ],
        &[],
    );
    assert!(matches!(gen_case(&spec, &tree), Err(BenchError::Spec(_))));

    // diameter within the digitization margin of the 1.0 cm threshold
    let spec = liver_spec(vec![lesion([20.0, 20.0, 20.0], 10.5, "benign")], &[]);
    assert!(matches!(gen_case(&spec, &tree), Err(BenchError::Spec(_))));

    // lesion poking out of the organ box
    let spec = liver_spec(vec![lesion([6.0, 20.0, 20.0], 8.0, "benign")], &[]);
    assert!(matches!(gen_case(&spec, &tree), Err(BenchError::Spec(_))));

    // category without an HU band
    let spec = liver_spec(vec![lesion([20.0, 20.0, 20.0], 7.0, "sparkly")], &[]);
    assert!(matches!(gen_case(&spec, &tree), Err(BenchError::Spec(_))));
}

#[test]
fn phantom_provider_recovers_the_encoded_category() {
    let tree = shipped::liver();
    let provider = PhantomLabelProvider::for_tree(&tree, 3).unwrap();
    let labels: Vec<String> = classify_attr(&tree).unwrap().categories.clone();
    let subject = "organ=liver; diameter_cm=1.20; mean_hu=135.0";
    let (label, scores) = crate::basefn::classify_label(&provider, subject, &labels).unwrap();
    assert_eq!(label, "suspicious");
    assert!((scores[1] - 1.0).abs() < 1e-12);
    // non-subject text falls back to plain hashing
    let (other, _) = crate::basefn::classify_label(&provider, "free text", &labels).unwrap();
    assert!(labels.contains(&other));
}

#[test]
fn matcher_recovers_oracle_paths_on_a_generated_suite() {
    let tree = shipped::liver();
    let config = SuiteConfig {
        n_cases: 24,
        seed: 5,
        grid: 40,
        max_lesions: 2,
    };
    let cases = generate_suite(&tree, &config).unwrap();
    assert!(cases.iter().any(|c| c.facts.lesions.len() == 2));
    assert!(cases.iter().any(|c| c.facts.lesions.is_empty()));
    for case in &cases {
        let matched = match_report_to_path(&tree, &case.facts).unwrap();
        assert_eq!(matched, case.oracle.aggregated.path, "{}", case.case_id);
    }
}

#[test]
fn matcher_breaks_unstated_ties_by_enumeration_order() {
    use crate::guideline::{parse_guideline};
    // sphericity is tested by the tree but never stated in report facts
    let doc = r#"{
      "organ": "liver",
      "version": "1.0",
      "attributes": [
        {"name": "diameter_cm", "type": "real", "unit": "cm", "producer": "measure", "method": "feret"},
        {"name": "sphericity_cm", "type": "real", "unit": "cm", "producer": "measure", "method": "equiv_sphere"}
      ],
      "root": "n0",
      "nodes": {
        "n0": {
          "kind": "decision",
          "predicate": {"op": "le", "attr": "diameter_cm", "value": 1.0, "unit": "cm"},
          "branches": {"true": "n1", "false": "l3"},
          "text": "Size"
        },
        "n1": {
          "kind": "decision",
          "predicate": {"op": "le", "attr": "sphericity_cm", "value": 0.8, "unit": "cm"},
          "branches": {"true": "l1", "false": "l2"},
          "text": "Shape"
        },
        "l1": {"kind": "leaf", "recommendation": "First.", "severity": 0, "text": "A"},
        "l2": {"kind": "leaf", "recommendation": "Second.", "severity": 0, "text": "B"},
        "l3": {"kind": "leaf", "recommendation": "Third.", "severity": 1, "text": "C"}
      }
    }"#;
    let tree = parse_guideline(doc).unwrap();
    let facts = ReportFacts {
        lesions: vec![LesionFacts {
            lesion_id: 1,
            diameter_cm: 0.5,
            intensity_hu: 110.0,
            category: String::new(),
        }],
        patient: PatientRecord {
            patient_id: "pt".to_string(),
            age_years: 50,
            sex: "F".to_string(),
            flags: Default::default(),
            phase: Phase::Venous,
        },
        text: "liver lesion 1".to_string(),
    };
    // both l1 and l2 are fully consistent; enumeration order wins
    let matched = match_report_to_path(&tree, &facts).unwrap();
    assert_eq!(matched.leaf_id, "l1");
}

#[test]
fn matcher_reports_when_nothing_is_consistent() {
    let tree = shipped::liver();
    let facts = ReportFacts {
        lesions: vec![LesionFacts {
            lesion_id: 1,
            diameter_cm: 2.0,
            intensity_hu: 110.0,
            category: "weird".to_string(),
        }],
        patient: PatientRecord {
            patient_id: "pt".to_string(),
            age_years: 50,
            sex: "F".to_string(),
            flags: Default::default(),
            phase: Phase::Venous,
        },
        text: "liver lesion 1".to_string(),
    };
    assert!(matches!(
        match_report_to_path(&tree, &facts),
        Err(BenchError::NoConsistentPath)
    ));
}

#[test]
fn diameter_bins_follow_the_tree_thresholds() {
    let tree = shipped::liver();
    let decl = diameter_attr(&tree).unwrap();
    let bins = attr_bins(&tree, decl).unwrap();
    assert_eq!(bins.edges, vec![1.0, 1.5]);
    assert_eq!(bins.reps, vec![0.75, 1.25, 1.75]);
    assert_eq!(bins.index_of(0.8), 0);
    assert_eq!(bins.index_of(1.0), 0);
    assert_eq!(bins.index_of(1.2), 1);
    assert_eq!(bins.index_of(1.7), 2);
    assert_eq!(bins.labels.len(), 3);
}

#[test]
fn random_baseline_matches_the_published_path_counts() {
    assert!((random_baseline_accuracy(&shipped::liver()) - 0.100).abs() < 5e-5);
    assert!((random_baseline_accuracy(&shipped::renal()) - 0.1667).abs() < 5e-5);
    assert!((random_baseline_accuracy(&shipped::pancreas()) - 0.0714).abs() < 5e-5);
}

#[test]
fn baseline_similarity_matches_an_independent_argmax() {
    let tree = shipped::liver();
    let provider = crate::basefn::HashEmbedding::new(21);
    let facts_text = "liver lesion 1: diameter 1.2 cm, mean intensity 135.0 HU.";
    let patient_text = "Patient: age 60, sex M, phase venous.";
    let predicted = baseline_path_similarity(
        &tree,
        facts_text,
        patient_text,
        &provider,
        BaselineOptions::default(),
    )
    .unwrap();

    // independent route: recompute every cosine by hand
    let query = provider.embed(facts_text).unwrap();
    let paths = enumerate_paths(&tree);
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (n, path) in paths.iter().enumerate() {
        let side = format!("{} {}", path_text(&tree, path).unwrap(), patient_text);
        let score = cosine_similarity(&query, &provider.embed(&side).unwrap()).unwrap();
        if score > best_score {
            best_score = score;
            best = n;
        }
    }
    assert_eq!(predicted, paths[best]);
}

#[test]
fn singleton_path_tree_is_always_predicted() {
    use crate::guideline::parse_guideline;
    let doc = r#"{
      "organ": "liver",
      "version": "1.0",
      "attributes": [],
      "root": "only",
      "nodes": {
        "only": {"kind": "leaf", "recommendation": "Nothing.", "severity": 0, "text": "None"}
      }
    }"#;
    let tree = parse_guideline(doc).unwrap();
    let provider = crate::basefn::HashEmbedding::new(4);
    let path = baseline_path_similarity(
        &tree,
        "anything",
        "anyone",
        &provider,
        BaselineOptions::default(),
    )
    .unwrap();
    assert_eq!(path.leaf_id, "only");
}

fn small_suite(tree: &GuidelineTree) -> Vec<BenchCase> {
    generate_suite(
        tree,
        &SuiteConfig {
            n_cases: 30,
            seed: 11,
            grid: 40,
            max_lesions: 2,
        },
    )
    .unwrap()
}

#[test]
fn full_mode_closes_on_the_oracle() {
    let tree = shipped::liver();
    let cases = small_suite(&tree);
    let provider = PhantomLabelProvider::for_tree(&tree, 0).unwrap();
    let outcome = run_benchmark(&tree, &cases, Mode::Full, &BenchProviders::new(&provider)).unwrap();
    assert!(outcome.case_errors.is_empty(), "{:?}", outcome.case_errors);
    assert_eq!(outcome.eval.accuracy, 1.0);
    assert_eq!(outcome.eval.explanation_accuracy, 1.0);
}

#[test]
fn random_mode_is_reproducible() {
    let tree = shipped::liver();
    let cases = small_suite(&tree);
    let provider = crate::basefn::HashEmbedding::new(0);
    let mut providers = BenchProviders::new(&provider);
    providers.random_seed = 99;
    let a = run_benchmark(&tree, &cases, Mode::Random, &providers).unwrap();
    let b = run_benchmark(&tree, &cases, Mode::Random, &providers).unwrap();
    assert_eq!(a, b);
}

#[test]
fn perfect_labeler_makes_ablated_equal_full() {
    let tree = shipped::liver();
    let cases = small_suite(&tree);
    let provider = PhantomLabelProvider::for_tree(&tree, 0).unwrap();
    let full = run_benchmark(&tree, &cases, Mode::Full, &BenchProviders::new(&provider)).unwrap();
    let mut providers = BenchProviders::new(&provider);
    providers.ablation = AblationLabeler::Oracle;
    let ablated = run_benchmark(&tree, &cases, Mode::Ablated, &providers).unwrap();
    assert_eq!(ablated.eval.accuracy, full.eval.accuracy);
    assert_eq!(ablated.eval.explanation_accuracy, full.eval.explanation_accuracy);
}

#[test]
fn noisy_labeler_degrades_ablated_mode() {
    let tree = shipped::liver();
    let cases = small_suite(&tree);
    let provider = PhantomLabelProvider::for_tree(&tree, 0).unwrap();
    let full = run_benchmark(&tree, &cases, Mode::Full, &BenchProviders::new(&provider)).unwrap();
    let mut providers = BenchProviders::new(&provider);
    providers.ablation = AblationLabeler::Noisy {
        flip_rate: 0.3,
        seed: 13,
    };
    let ablated = run_benchmark(&tree, &cases, Mode::Ablated, &providers).unwrap();
    assert!(
        ablated.eval.accuracy < full.eval.accuracy,
        "ablated {} vs full {}",
        ablated.eval.accuracy,
        full.eval.accuracy
    );
}

#[test]
fn random_accuracy_concentrates_near_one_over_paths() {
    // 10^4 seeded trials of uniform prediction against a uniform oracle on
    // the 10-path liver tree
    let tree = shipped::liver();
    let paths = enumerate_paths(&tree);
    let mut rng = ChaCha8Rng::seed_from_u64(424242);
    let trials = 10_000;
    let mut hits = 0usize;
    for _ in 0..trials {
        let truth = rng.random_range(0..paths.len());
        let pred = rng.random_range(0..paths.len());
        if truth == pred {
            hits += 1;
        }
    }
    let empirical = hits as f64 / trials as f64;
    assert!(
        (empirical - random_baseline_accuracy(&tree)).abs() <= 0.02,
        "empirical {empirical}"
    );
}

#[test]
fn suite_generation_is_deterministic() {
    let tree = shipped::renal();
    let config = SuiteConfig {
        n_cases: 8,
        seed: 3,
        grid: 40,
        max_lesions: 2,
    };
    let a = generate_suite(&tree, &config).unwrap();
    let b = generate_suite(&tree, &config).unwrap();
    assert_eq!(a, b);
}
