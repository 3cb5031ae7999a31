//! One crowded scene, three suppression policies. Hard suppression cannot
//! tell a duplicate from a genuinely overlapping neighbor; the guided
//! variant uses embedding distance to decay duplicates harder and real
//! neighbors less.

use karyodet::geometry::{iou, BBox};
use karyodet::nms::{embedding_guided_nms, guided_decay, hard_nms, soft_nms, NmsConfig};
use karyodet::Detection;

fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
    BBox::new(x1, y1, x2, y2).unwrap()
}

fn main() {
    // Object A and a slightly shifted duplicate of it share an embedding;
    // object B leans heavily into A but embeds far away.
    let a = Detection::with_embedding(bb(0.0, 0.0, 40.0, 100.0), 0.95, 1.5);
    let dup = Detection::with_embedding(bb(8.0, 0.0, 44.0, 100.0), 0.70, 1.52);
    let b = Detection::with_embedding(bb(12.0, 0.0, 52.0, 100.0), 0.68, 3.0);
    println!(
        "iou(A, dup) = {:.3}   iou(A, B) = {:.3}   |emb(A) - emb(B)| = {:.2}",
        iou(&a.bbox, &dup.bbox),
        iou(&a.bbox, &b.bbox),
        (a.embedding.unwrap() - b.embedding.unwrap()).abs()
    );
    let cfg = NmsConfig {
        score_floor: 0.3,
        ..NmsConfig::default()
    };

    // The single-step decay a kept winner applies to each rival. Soft decay
    // sees only the overlap; the guided factor sharpens when the embeddings
    // agree (a duplicate) and relaxes when they disagree (a real neighbor).
    println!();
    println!("one-step decay factor              soft     guided");
    for (label, rival) in [("dup", &dup), ("B", &b)] {
        let v = iou(&a.bbox, &rival.bbox);
        let d = (a.embedding.unwrap() - rival.embedding.unwrap()).abs();
        let soft_factor = (-(v * v) / cfg.sigma).exp();
        let guided_factor = guided_decay(v, d, cfg.sigma, cfg.delta);
        println!(
            "  {:<4} (iou {:.3}, emb gap {:.2})   {:.3}    {:.3}",
            label, v, d, soft_factor, guided_factor
        );
    }

    let dets = vec![a, dup, b];

    let hard = hard_nms(&dets, 0.5).unwrap();
    let soft = soft_nms(&dets, &cfg).unwrap();
    let guided = embedding_guided_nms(&dets, &cfg).unwrap();

    let name = |d: &Detection| match d.bbox.x1() as i64 {
        0 => "A",
        8 => "dup",
        _ => "B",
    };

    println!();
    println!("hard (iou >= 0.5):      kills everything that leans into the winner");
    for d in &hard {
        println!("  {:<4} score {:.3}", name(d), d.score);
    }
    println!("soft (sigma {:.1}):        decays by overlap alone", cfg.sigma);
    for d in &soft {
        println!("  {:<4} score {:.3}", name(d), d.score);
    }
    println!("guided (delta {:.1}):      decays duplicates harder, neighbors less", cfg.delta);
    for d in &guided {
        println!("  {:<4} score {:.3}", name(d), d.score);
    }
}
