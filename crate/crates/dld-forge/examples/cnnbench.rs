use dld_forge::surrogate::{cnn_build, cnn_train, FieldSample, TrainConfig};
use std::time::Instant;
fn main() {
    let res = 32;
    let samples: Vec<FieldSample> = (0..8)
        .map(|i| FieldSample {
            inputs: [0.3 + 0.05 * i as f64, 3.0 + (i % 7) as f64, 0.5 + i as f64],
            u: (0..res * res).map(|k| ((k * 7 + i) % 100) as f64 * 0.01).collect(),
            v: (0..res * res).map(|k| ((k * 3 + i) % 90) as f64 * 0.01).collect(),
        })
        .collect();
    for base in [64usize, 32] {
        let mut net = cnn_build(res, base).unwrap();
        let cfg = TrainConfig { batch_size: 8, schedule: vec![(10, 2e-3)], seed: 1, stop_below: None };
        let t = Instant::now();
        cnn_train(&mut net, &samples, &[], &cfg).unwrap();
        let dt = t.elapsed();
        println!("base={base}: 10 epochs x 8 samples in {dt:.2?} -> {:.1} ms/sample-epoch, loss {:.3e} -> {:.3e}",
            dt.as_secs_f64() * 1000.0 / 80.0, net.meta.losses[0].0, net.meta.losses.last().unwrap().0);
    }
}
