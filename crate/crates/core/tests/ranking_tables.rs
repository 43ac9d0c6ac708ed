//! Average-rank aggregation reproduces published leaderboards from their LR
//! and SCR columns.

use std::collections::BTreeMap;

use tarjama_core::ranking::{average_rank, column_ranks, Criterion, MetricTable};

const S1K_INTRINSIC: &[(&str, f64, f64, f64)] = &[
    ("GPT 4.1", 0.8995, 0.9318, 1.00),
    ("Gemma3 27B", 0.8903, 0.9162, 2.50),
    ("Qwen3 32B", 0.8883, 0.8956, 3.50),
    ("Qwen3 235B", 0.8984, 0.8795, 4.50),
    ("OSS 120B", 0.8617, 0.8848, 4.50),
    ("Kimi k2", 0.8467, 0.8842, 6.00),
    ("Seed-X 7B", 0.8539, 0.8829, 6.00),
    ("Qwen2.5 3B", 0.1893, 0.8157, 8.00),
    ("Qwen2.5 1.5B", 0.1639, 0.7518, 9.50),
    ("Falcon3 3B", 0.0843, 0.7568, 10.00),
    ("Qwen2.5 0.5B", 0.1379, 0.7001, 10.50),
];

fn intrinsic_table(rows: &[(&str, f64, f64, f64)]) -> MetricTable {
    MetricTable::from_pairs(rows.iter().map(|(s, lr, scr, _)| (*s, vec![("LR", *lr), ("SCR", *scr)]))).unwrap()
}

fn lr_scr() -> Vec<Criterion> {
    vec![Criterion::higher("LR"), Criterion::higher("SCR")]
}

fn assert_avg_ranks(rows: &[(&str, f64, f64, f64)], got: &BTreeMap<String, f64>) {
    assert_eq!(got.len(), rows.len());
    for (system, _, _, expected) in rows {
        let v = got[*system];
        assert!((v - expected).abs() < 1e-9, "{system}: got {v}, expected {expected}");
    }
}

#[test]
fn s1k_intrinsic_average_ranks() {
    let got = average_rank(&intrinsic_table(S1K_INTRINSIC), &lr_scr()).unwrap();
    assert_avg_ranks(S1K_INTRINSIC, &got);
}

#[test]
fn s1k_lr_column_top_three() {
    let ranks = column_ranks(&intrinsic_table(S1K_INTRINSIC), "LR", true).unwrap();
    assert_eq!(ranks["GPT 4.1"], 1.0);
    assert_eq!(ranks["Qwen3 235B"], 2.0);
    assert_eq!(ranks["Gemma3 27B"], 3.0);
    let scr = column_ranks(&intrinsic_table(S1K_INTRINSIC), "SCR", true).unwrap();
    assert_eq!(scr["Qwen3 235B"], 7.0);
}

#[test]
fn line_and_temperature_variants() {
    let lines = [
        ("25 lines", 0.8883, 0.8956, 1.00),
        ("50 lines", 0.8697, 0.8913, 2.00),
        ("100 lines", 0.8367, 0.8862, 3.00),
        ("500 lines", 0.6336, 0.8792, 4.00),
    ];
    assert_avg_ranks(&lines, &average_rank(&intrinsic_table(&lines), &lr_scr()).unwrap());
    let temps = [
        ("Temperature 0.7", 0.8911, 0.8974, 1.00),
        ("Temperature 0.5", 0.8887, 0.8957, 2.00),
        ("Temperature 0.2", 0.8883, 0.8956, 3.00),
        ("Temperature 0", 0.8866, 0.8903, 4.00),
    ];
    assert_avg_ranks(&temps, &average_rank(&intrinsic_table(&temps), &lr_scr()).unwrap());
}

#[test]
fn intrinsic_plus_downstream_ranks() {
    // LR, SCR, then two downstream ranks where lower is better.
    let rows: &[(&str, f64, f64, f64, f64, f64)] = &[
        ("Gemma3 27B", 0.8903, 0.9162, 4.0, 2.0, 2.25),
        ("Qwen3 32B", 0.8883, 0.8956, 1.0, 7.0, 3.25),
        ("Seed-X 7B", 0.8539, 0.8829, 2.0, 4.0, 3.75),
        ("Qwen3 235B", 0.8984, 0.8795, 5.0, 6.0, 4.25),
        ("Qwen2.5 3B", 0.1893, 0.8157, 3.0, 3.0, 4.50),
        ("OSS 120B", 0.8617, 0.8848, 7.0, 5.0, 4.75),
        ("Qwen2.5 1.5B", 0.1639, 0.7518, 6.0, 1.0, 5.50),
        ("Falcon 3B", 0.0843, 0.7568, 8.0, 8.0, 7.75),
    ];
    let table = MetricTable::from_pairs(rows.iter().map(|(s, lr, scr, a, b, _)| {
        (*s, vec![("LR", *lr), ("SCR", *scr), ("A", *a), ("B", *b)])
    }))
    .unwrap();
    let criteria = vec![
        Criterion::higher("LR"),
        Criterion::higher("SCR"),
        Criterion::lower("A"),
        Criterion::lower("B"),
    ];
    let got = average_rank(&table, &criteria).unwrap();
    for (system, .., expected) in rows {
        assert!((got[*system] - expected).abs() < 1e-9, "{system}: {}", got[*system]);
    }
}
