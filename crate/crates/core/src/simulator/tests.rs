use super::*;
use crate::mechanisms::{compute_window_scores, AttributeSelection};

fn small(seed: u64) -> SimConfig {
    SimConfig::generated(5, 300, 40, seed)
}

#[test]
fn single_project_never_migrates() {
    let out = simulate(&SimConfig::generated(1, 50, 30, 3)).unwrap();
    assert!(out.ground_truth.migrations.is_empty());
    assert!(out.transfers.iter().all(|e| e.is_mint()));
    assert!(out.ground_truth.holders.iter().all(|row| row[0] == 50));
}

#[test]
fn zero_lambda_means_no_cross_traffic() {
    let mut cfg = small(1);
    cfg.true_lambda = vec![0.0; 25];
    let out = simulate(&cfg).unwrap();
    assert!(out.ground_truth.migrations.is_empty());
    assert!(out.transfers.iter().all(|e| e.is_mint()));
}

#[test]
fn symmetric_pair_flows_balance() {
    let (mut ab, mut ba) = (0.0, 0.0);
    for seed in 0..10 {
        let cfg = SimConfig {
            n_projects: 2,
            n_wallets: 400,
            n_days: 30,
            launch_offsets: vec![0, 0],
            true_lambda: vec![0.0, 0.8, 0.8, 0.0],
            popularity: vec![PopularityProcess { base: 500.0, decay: 0.01, amplitude: 0.5, period: 14.0 }; 2],
            migration_scale: 1.0,
            allow_remigration: true,
            seed,
            ..SimConfig::generated(2, 400, 30, seed)
        };
        let totals = simulate(&cfg).unwrap().ground_truth.cumulative();
        ab += totals.get(0, 1);
        ba += totals.get(1, 0);
    }
    assert!(ab + ba > 100.0, "too few migrations to compare: {ab} {ba}");
    // The difference of two equal-rate counts has variance about their sum.
    assert!((ab - ba).abs() <= 3.0 * (ab + ba).sqrt(), "{ab} vs {ba}");
}

#[test]
fn runs_are_deterministic() {
    let cfg = small(9);
    assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    simulate(&cfg).unwrap().write_to(dir_a.path()).unwrap();
    simulate(&cfg).unwrap().write_to(dir_b.path()).unwrap();
    for name in [PROJECTS_FILE, TRANSFERS_FILE, DAILY_STATS_FILE, SOCIAL_FILE, GROUND_TRUTH_FILE, CONFIG_ECHO_FILE] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn files_round_trip_through_ingest() {
    let out = simulate(&small(4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write_to(dir.path()).unwrap();
    let ds = Dataset::load(dir.path()).unwrap();
    assert!(ds.roles().anomalies().is_empty());
    let gt = &out.ground_truth;
    for (p, id) in gt.projects.iter().enumerate() {
        let roles = ds.roles().project(id);
        for (d, row) in gt.holders.iter().enumerate() {
            let got = roles.map(|r| r.holder_count(gt.day(d))).unwrap_or(0);
            assert_eq!(got, row[p], "project {p} day {d}");
        }
    }
    let file = std::fs::File::open(dir.path().join(GROUND_TRUTH_FILE)).unwrap();
    assert_eq!(parse_ground_truth(file).unwrap(), gt.migrations);
    let echo = std::fs::read_to_string(dir.path().join(CONFIG_ECHO_FILE)).unwrap();
    assert_eq!(SimConfig::parse(&echo).unwrap(), gt.config);
}

#[test]
fn every_migration_is_a_sell_buy_pair() {
    let out = simulate(&small(2)).unwrap();
    let escrow: Vec<WalletAddress> = (0..5).map(escrow_address).collect();
    let mut pairs = 0u32;
    for (k, e) in out.transfers.iter().enumerate() {
        if escrow.contains(&e.to) {
            let buy = &out.transfers[k + 1];
            assert_eq!(buy.to, e.from);
            assert_ne!(buy.project, e.project);
            assert!(buy.is_mint() || escrow.contains(&buy.from));
            pairs += 1;
        }
    }
    let total: u32 = out.ground_truth.migrations.iter().map(|r| r.migrants).sum();
    assert!(total > 0);
    assert_eq!(pairs, total);
}

#[test]
fn shared_wallets_equal_migrants() {
    let out = simulate(&small(6)).unwrap();
    let ds = out.dataset().unwrap();
    let span = ds.span().unwrap();
    let analysis = compute_window_scores(&ds, &span, &AttributeSelection::all()).unwrap();
    let totals = out.ground_truth.cumulative();
    for (a, pa) in analysis.alive.iter().enumerate() {
        for (b, pb) in analysis.alive.iter().enumerate() {
            if a != b {
                let (i, j) = (totals.index_of(pa).unwrap(), totals.index_of(pb).unwrap());
                assert_eq!(analysis.migrated.get(a, b), totals.get(i, j), "{pa} -> {pb}");
            }
        }
    }
}

#[test]
fn recovery_examples() {
    let out = simulate(&small(5)).unwrap();
    let totals = out.ground_truth.cumulative();
    let ids = totals.projects().to_vec();
    let exact = PairMatrix::from_rows(ids.clone(), totals.values().iter().map(|v| 3.0 * v).collect()).unwrap();
    let r = evaluate_recovery(&out.ground_truth, &exact).unwrap();
    assert!((r.pooled.value - 1.0).abs() < 1e-12);
    assert_eq!(r.pairs, 20);
    let reversed = PairMatrix::from_rows(ids.clone(), totals.values().iter().map(|v| -v).collect()).unwrap();
    let r = evaluate_recovery(&out.ground_truth, &reversed).unwrap();
    assert!((r.pooled.value + 1.0).abs() < 1e-12);

    let two = PairMatrix::zeros(ids[..2].to_vec());
    assert_eq!(evaluate_recovery(&out.ground_truth, &two).unwrap_err(), SimError::InsufficientPairs(2));
    let stranger = PairMatrix::zeros(vec![ids[0].clone(), ids[1].clone(), ProjectId::new("0xabc").unwrap()]);
    assert!(matches!(evaluate_recovery(&out.ground_truth, &stranger), Err(SimError::UnknownProject(_))));
}
