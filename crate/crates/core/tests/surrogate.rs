//! Autoencoder and forward model trained on the default synthetic dataset.

use latent_calib::autoencoder::{encode_dataset, train_autoencoder, AutoencoderConfig, LatentVector};
use latent_calib::datagen::{generate_dataset, DensityProfile, Simulator, Split, SplitFractions, CORRELATED_PAIR};
use latent_calib::experiments::toy::simulator_pair_r;
use latent_calib::forward::{train_forward, ForwardConfig};
use latent_calib::stats::{pearson, sample_sd};

#[test]
fn default_dataset_surrogate() {
    let sim = Simulator::new(16).unwrap();
    let data = generate_dataset(2000, 1, DensityProfile::Uniform, SplitFractions::default(), &sim).unwrap();
    let ae = train_autoencoder(
        &data,
        &AutoencoderConfig {
            seed: 2,
            ..AutoencoderConfig::default()
        },
    )
    .unwrap();
    assert_eq!(ae.log.len(), 200);
    assert!(ae.log.last().unwrap().train <= ae.log[10].train);

    let r2 = ae.scalar_r2(&data, Split::Validation).unwrap();
    assert!(r2.iter().all(|&r| r >= 0.95), "{r2:?}");

    let latent = encode_dataset(&ae, &data).unwrap();
    let train = latent.split_latents(Split::Train);
    for d in 0..latent.d_z() {
        let col: Vec<f64> = train.iter_rows().map(|r| r[d]).collect();
        assert!(sample_sd(&col).powi(2) > 1e-8, "latent dim {d} collapsed");
    }

    let (i, j) = CORRELATED_PAIR;
    let val = data.split(Split::Validation);
    let recon: Vec<_> = val
        .iter()
        .map(|&k| ae.decode(&ae.encode(&data.output(k)).unwrap()).unwrap())
        .collect();
    let a: Vec<f64> = recon.iter().map(|o| o.scalars[i]).collect();
    let b: Vec<f64> = recon.iter().map(|o| o.scalars[j]).collect();
    assert!(pearson(&a, &b) >= 0.9);
    assert!(recon.iter().all(|o| o.image.iter().all(|&p| p >= 0.0)));

    let z = ae.encode(&data.output(val[0])).unwrap();
    let nudged = LatentVector(z.0.iter().map(|v| v + 5e-7).collect());
    let (y0, y1) = (ae.decode(&z).unwrap().concat(), ae.decode(&nudged).unwrap().concat());
    let dist = y0.iter().zip(&y1).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    assert!(dist < 1e-3, "decoder jumped by {dist}");

    let cfg = ForwardConfig {
        mc_train: 20,
        ..ForwardConfig::default()
    };
    let model = train_forward(&latent, 0.95, &cfg, 3).unwrap();
    let first = model.log.epochs[0].validation;
    let best = model.log.best_validation_epoch().unwrap().validation;
    assert!(best < first, "validation NLL {first} -> best {best}");

    let x = data.input(data.split(Split::Test)[0]);
    let post = model.predict_output_posterior(&ae, &x, 1000, 4).unwrap();
    assert_eq!(post.samples.len(), 1000);
    let r = pearson(&post.scalar_column(i), &post.scalar_column(j));
    let sim_r = simulator_pair_r(&data);
    assert!((r - sim_r).abs() <= 0.15, "decoded pair r {r} vs simulator {sim_r}");
}
