use std::time::Instant;
use gcm_core::metrics::{dataset_summary, evaluate_scene};
use gcm_core::scene::{generate_dataset, GenConfig};
use gcm_core::vi::{extract_partition, run_vi, PriorKind, ViConfig};
use gcm_core::geometry::TemplateLibrary;

fn main() {
    let lib = TemplateLibrary::constellation();
    let cfg = GenConfig::default();
    let data = generate_dataset(&cfg, 7);
    println!("{} scenes", data.len());
    for kind in [PriorKind::DoublyStochastic, PriorKind::Mixture] {
        let start = Instant::now();
        let mut rows = Vec::new();
        for (i, scene) in data.iter().enumerate().take(120) {
            let vi_cfg = ViConfig::new(kind, 1000 + i as u64);
            let result = run_vi(scene.points(), &lib, &vi_cfg).unwrap();
            let (pred, _) = extract_partition(&result.responsibilities, &lib);
            rows.push(evaluate_scene(scene, &pred, &lib).unwrap());
        }
        let elapsed = start.elapsed().as_secs_f64();
        let s = dataset_summary(&rows).unwrap();
        println!("{kind:?}: 120 scenes in {elapsed:.1}s ({:.3}s/scene) | SA {:.3} ARI {:.3} VI {:.3} acc {:.3} | maskSA {:.3}",
            elapsed / 120.0, s.sa, s.ari, s.vi, s.scene_acc, s.sa_mask);
    }
}
