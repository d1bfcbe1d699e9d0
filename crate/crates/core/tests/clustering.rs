mod oracles;

use entity_forge_core::cluster::{cluster_grid, regions_to_masks, RegionGraph, ThresholdSchedule};
use entity_forge_core::pool::{mask_nms_indices, mix_snapshots, NmsConfig, NmsOrdering};
use oracles::*;
use rand::Rng;

#[test]
fn heap_matches_rescan_on_random_grids() {
    let mut rng = rng(11);
    let schedule = ThresholdSchedule::default();
    for _ in 0..40 {
        let (h, w) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
        let c = rng.gen_range(1..=5);
        let grid = random_grid(&mut rng, h, w, c);
        assert_eq!(cluster_grid(&grid, &schedule), naive_agglomerate(&grid, &schedule));
    }
}

#[test]
fn custom_schedules_match_rescan() {
    let mut rng = rng(12);
    for _ in 0..20 {
        let mut ts: Vec<f64> = (0..rng.gen_range(1..5)).map(|_| rng.gen_range(0.01..0.99)).collect();
        ts.sort_by(|a, b| b.total_cmp(a));
        ts.dedup();
        let schedule = ThresholdSchedule::new(ts).unwrap();
        let grid = random_grid(&mut rng, 7, 9, 3);
        assert_eq!(cluster_grid(&grid, &schedule), naive_agglomerate(&grid, &schedule));
    }
}

#[test]
fn graph_bookkeeping() {
    let mut rng = rng(13);
    let grid = random_grid(&mut rng, 5, 6, 2);
    let g = RegionGraph::build(&grid);
    assert_eq!(g.region_count(), 30);
    assert_eq!(g.edge_count(), 5 * 5 + 4 * 6);
    assert_eq!(g.heap_len(), g.edge_count());
    assert_eq!(g.neighbors(0).collect::<Vec<_>>(), vec![1, 6]);
}

#[test]
fn snapshot_masks_partition_the_image() {
    let mut rng = rng(14);
    for _ in 0..10 {
        let grid = random_grid(&mut rng, 8, 8, 3);
        let agg = cluster_grid(&grid, &ThresholdSchedule::default());
        let mut prev = usize::MAX;
        for snap in &agg.snapshots {
            assert!(snap.region_count <= prev);
            prev = snap.region_count;
            let masks = regions_to_masks(snap, 8);
            assert_eq!(masks.len(), snap.region_count);
            assert_eq!(masks.iter().map(|m| m.area_px).sum::<u64>(), 64 * 64);
            for (i, a) in masks.iter().enumerate() {
                for b in &masks[i + 1..] {
                    assert_eq!(a.mask.intersection_area(&b.mask).unwrap(), 0);
                }
            }
        }
    }
}

#[test]
fn nms_matches_dense_reference() {
    let mut rng = rng(15);
    for round in 0..60 {
        let count = rng.gen_range(0..25);
        let pool = random_pool(&mut rng, 12, count);
        let ordering = if round % 2 == 0 { NmsOrdering::AreaDesc } else { NmsOrdering::ThresholdThenArea };
        for thr in [0.5, 0.9, 1.0] {
            let cfg = NmsConfig { iou_threshold: thr, ordering };
            assert_eq!(mask_nms_indices(&pool, &cfg).unwrap(), naive_nms(&pool, thr, ordering));
        }
    }
}

#[test]
fn nms_on_real_snapshot_pools() {
    let mut rng = rng(16);
    for _ in 0..10 {
        let grid = random_grid(&mut rng, 10, 10, 4);
        let pool = mix_snapshots(&cluster_grid(&grid, &ThresholdSchedule::default()).snapshots, 8);
        let kept = mask_nms_indices(&pool, &NmsConfig::default()).unwrap();
        assert_eq!(kept, naive_nms(&pool, 0.9, NmsOrdering::AreaDesc));
        assert!(kept.len() <= pool.len());
    }
}
