//! Score a noisy synthetic corpus and print the headline metrics plus the
//! crowded-subset breakdown.

use karyodet::metrics::{evaluate_corpus, EvalImage, EvalOptions};
use karyodet::synth::{generate, ScenarioConfig};

fn main() {
    // A moderately crowded detector run: jittered boxes, a few misses,
    // some spurious hits and duplicates.
    let cfg = ScenarioConfig {
        seed: 42,
        num_images: 8,
        overlap_intensity: 0.4,
        jitter_std: 2.0,
        fn_rate: 0.05,
        fp_rate: 0.08,
        duplicate_rate: 0.05,
        embedding_noise_std: 0.1,
        ..ScenarioConfig::default()
    };
    let scenario = generate(&cfg).expect("feasible scene");
    let images: Vec<EvalImage> = scenario
        .images
        .iter()
        .map(|im| EvalImage {
            dets: im.dets.clone(),
            gts: im.gts.clone(),
        })
        .collect();
    let ids: Vec<String> = (0..images.len()).map(|i| format!("img-{i:02}")).collect();

    let summary = evaluate_corpus(&images, &ids, &EvalOptions::default()).expect("valid corpus");

    println!(
        "{} images, {} ground truths, {} detections",
        summary.num_images, summary.num_gts, summary.num_detections
    );
    println!();
    println!("wcr        {:.4}   (images with zero errors)", summary.wcr);
    println!("aer        {:.4}   (errors per ground truth)", summary.aer);
    println!("accuracy   {:.4}", summary.accuracy);
    println!("precision  {:.4}", summary.precision);
    println!("recall     {:.4}", summary.recall);
    println!("f1         {:.4}", summary.f1);
    println!("ap         {:.4}", summary.ap);
    println!("mr2        {:.4}   (lower is better)", summary.mr2);

    // The subset of ground truths at least half covered by their neighbors
    // is where crowding actually bites; compare its recall to the corpus.
    let o = &summary.overlap;
    println!();
    println!(
        "crowded subset: {} of {} ground truths ({:.1}%)",
        o.num_gts,
        summary.num_gts,
        100.0 * o.gt_fraction
    );
    println!(
        "  recall {:.4} vs {:.4} overall, precision {:.4}, f1 {:.4}",
        o.recall, summary.recall, o.precision, o.f1
    );

    println!();
    println!("image      tp  fp  fn");
    for c in &summary.per_image {
        println!("{:<9} {:>3} {:>3} {:>3}", c.image_id, c.tp, c.fp, c.fn_);
    }
}
