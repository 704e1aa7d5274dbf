mod common;

use common::{run_case, GRADIENT_CASES, FD_TOL};

fn check(name: &str) {
    let (i, (_, case)) = GRADIENT_CASES.iter().enumerate().find(|(_, (n, _))| *n == name).unwrap();
    let worst = run_case(*case, 20, 1000 + i as u64);
    assert!(worst < FD_TOL, "{name}: worst relative error {worst:e}");
}

macro_rules! gradient_tests {
    ($($name:ident),* $(,)?) => {
        $(#[test] fn $name() { check(stringify!($name)); })*
    };
}

gradient_tests!(
    conv2d,
    relu,
    maxpool,
    unpool,
    upsample_nearest,
    concat_last,
    concat_broadcast,
    concat_flatten,
    linear,
    lstm,
    lstm_bidirectional,
    reshape,
    unit_normalize,
    dot_const,
    dc_loss,
    model,
);
