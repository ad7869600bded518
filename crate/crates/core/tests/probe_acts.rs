//! Temporary activation probe.
use fgwk::model::FgvrModel;
use fgwk::config::RunConfig;
use fgwk::ensemble::VariantId;
use fgwk::synthdata::generate_original;
use fgwk::train::model_init_seed;

#[test]
#[ignore]
fn activation_magnitudes() {
    let cfg = RunConfig::default();
    let resolved = cfg.resolve(VariantId::Base).unwrap();
    let model = FgvrModel::init(resolved.model, model_init_seed(7, VariantId::Base)).unwrap();
    let img = generate_original(64, 1, 3, 0).image.to_tensor();
    let out = model.forward(&img).unwrap();
    for (b, fmap) in out.feature_maps.iter().enumerate() {
        let v = fmap.to_vec();
        let mean_abs: f32 = v.iter().map(|x| x.abs()).sum::<f32>() / v.len() as f32;
        let max: f32 = v.iter().fold(0.0f32, |a, &x| a.max(x.abs()));
        println!("block {}: mean|a|={mean_abs:.5} max|a|={max:.5}", b + 1);
    }
    println!("logits: {:?}", out.logits.to_vec());
    for (b, aux) in out.aux_logits.iter().enumerate() {
        println!("aux {}: {:?}", b + 1, aux.to_vec());
    }
}
