use warmcloud::mms::{mms_convergence, MmsCase};

#[test]
fn diffusion_case_is_second_order_on_small_grids() {
    let obs = mms_convergence(&MmsCase::<f64>::diffusion(), &[8, 16, 32]).unwrap();
    assert!(obs.monotone);
    for o in obs.orders {
        assert!((o - 2.0).abs() < 0.25, "{:?}", obs.orders);
    }
}

#[test]
fn advection_case_is_first_order_on_small_grids() {
    let obs = mms_convergence(&MmsCase::<f64>::advection(), &[8, 16, 32]).unwrap();
    assert!(obs.monotone);
    for o in obs.orders {
        assert!((o - 1.0).abs() < 0.25, "{:?}", obs.orders);
    }
}
