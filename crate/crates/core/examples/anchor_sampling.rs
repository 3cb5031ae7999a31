//! Anchor grid, hardness labels, and stratified batch draws under both
//! labeling schemes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use karyodet::anchors::{
    batch_quotas, generate_anchors, label_anchors, sample_batch, stratum_pools, AnchorConfig,
    AnchorLabel, HardnessScheme,
};
use karyodet::geometry::BBox;

fn main() {
    let cfg = AnchorConfig::for_image(512, 384);
    let anchors = generate_anchors(&cfg).unwrap();
    let (rows, cols) = cfg.grid_dims();
    println!(
        "{} anchors: {rows}x{cols} grid, {} shapes per cell",
        anchors.len(),
        cfg.shapes_per_cell()
    );

    let gts = vec![
        BBox::new(100.0, 100.0, 164.0, 132.0).unwrap(),
        BBox::new(220.0, 150.0, 316.0, 182.0).unwrap(),
        BBox::new(380.0, 240.0, 412.0, 368.0).unwrap(),
    ];

    for scheme in [HardnessScheme::V1, HardnessScheme::V2] {
        let labels = label_anchors(&anchors, &gts, scheme);
        let pools = stratum_pools(&labels);
        let ignored = labels.iter().filter(|l| matches!(l, AnchorLabel::Ignore)).count();
        println!();
        println!(
            "{scheme:?}: {} positive, {} hard, {} easy, {} ignored",
            pools.positive.len(),
            pools.hard.len(),
            pools.easy.len(),
            ignored
        );

        let batch = 256;
        let (q_pos, q_hard, q_easy) = batch_quotas(batch);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let drawn = sample_batch(&pools, batch, &mut rng);
        println!(
            "  batch {batch} (quota {q_pos}/{q_hard}/{q_easy}): drew {}/{}/{}, shortfall {}",
            drawn.positive.len(),
            drawn.hard.len(),
            drawn.easy.len(),
            drawn.shortfall
        );
    }

    // The positive pool is small here, so its quota deficit spills into
    // the negative strata rather than shrinking the batch.
    println!();
    println!("quotas for 512: {:?}", batch_quotas(512));
}
