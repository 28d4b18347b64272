//! Quick end-to-end probe over the built-in benchmarks: train, extract,
//! verify exhaustively and report the support-variant statistics.

use std::time::Instant;

use netrules::datagen::Benchmark;
use netrules::evaluation::{
    accuracy, fidelity, prune_by_support, verify_exhaustive, DEFAULT_VERIFY_CAP,
};
use netrules::extraction::extract;
use netrules::model::{train, TrainConfig};

fn main() {
    for bench in Benchmark::all() {
        let t0 = Instant::now();
        let full = bench.generate(42);
        let schema = full.schema().clone();
        let (train_ds, test_ds) = full.split_train_test(0.2, 42);
        let config = TrainConfig::default();
        let net = train(&train_ds, &config).expect("training");
        let t_train = t0.elapsed();

        let t1 = Instant::now();
        let rules = extract(&net, &schema).expect("extraction");
        let t_extract = t1.elapsed();

        let t2 = Instant::now();
        let v = verify_exhaustive(&rules, &net, &schema, DEFAULT_VERIFY_CAP).expect("verify");
        let t_verify = t2.elapsed();

        let support = prune_by_support(&rules, &train_ds);
        let test_instances: Vec<_> = test_ds.instances().cloned().collect();
        let fid_support = fidelity(&support, &net, &schema, &test_instances).unwrap();
        let acc_net = accuracy(&net, &schema, test_ds.rows()).unwrap();
        let acc_train = accuracy(&net, &schema, train_ds.rows()).unwrap();

        println!(
            "{:>14}: train {:>6.1?}s extract {:>6.2?}s verify {:>6.2?}s | \
             verify_pass={} checked={} | acc(train)={:.3} acc(test)={:.3} | \
             rules full={} (pos={}) support={} | fid(support)={:.4}",
            bench.name(),
            t_train.as_secs_f64(),
            t_extract.as_secs_f64(),
            t_verify.as_secs_f64(),
            v.passed(),
            v.checked,
            acc_train,
            acc_net,
            rules.len(),
            rules.positive_count(),
            support.len(),
            fid_support,
        );
    }
}
