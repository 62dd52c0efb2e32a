use evformer::autograd::{check_gradients, Conv2dSpec, Graph, Tensor};
use evformer::evconv::{build_count_map, event_conv_reference, footprint_size, strided_readout, Kernel, ReadoutBank};
use evformer::event::{bin_events, truncate_prefix, Event, EventStream, Polarity};
use evformer::snn::{lif_scan, LifParams, SpikeMode};
use proptest::prelude::*;

fn stream_strategy(max_side: u16, max_events: usize) -> impl Strategy<Value = EventStream> {
    (1..=max_side, 1..=max_side, 1u32..=10_000).prop_flat_map(move |(w, h, d)| {
        proptest::collection::vec((0..d, 0..w, 0..h, any::<bool>()), 0..=max_events).prop_map(move |raw| {
            let events = raw
                .into_iter()
                .map(|(t, x, y, on)| Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off }))
                .collect();
            EventStream::from_unsorted(w, h, d, events).unwrap()
        })
    })
}

fn kernel_strategy() -> impl Strategy<Value = Kernel<f64>> {
    prop_oneof![Just(3usize), Just(5usize)].prop_flat_map(|k| {
        proptest::collection::vec(-4i32..=4, k * k)
            .prop_map(move |v| Kernel::new(k, v.into_iter().map(f64::from).collect()).unwrap())
    })
}

fn tensor(shape: &'static [usize]) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    proptest::collection::vec(-1.0f64..1.0, n).prop_map(move |v| Tensor::new(shape, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binning_partitions_by_integer_window(s in stream_strategy(8, 200), t_steps in 1usize..=12) {
        let bins = bin_events(&s, t_steps).unwrap();
        prop_assert_eq!(bins.len(), t_steps);
        prop_assert_eq!(bins.iter().map(|b| b.len()).sum::<usize>(), s.len());
        prop_assert_eq!(bins.iter().map(|b| b.duration() as u64).sum::<u64>(), s.duration() as u64);
        let d = s.duration() as u64;
        let t = t_steps as u64;
        let mut expected: Vec<Vec<(u16, u16, Polarity)>> = vec![Vec::new(); t_steps];
        for e in s.events() {
            let i = (0..t_steps).find(|&i| (e.t as u64) * t < (i as u64 + 1) * d).unwrap_or(t_steps - 1);
            expected[i].push((e.x, e.y, e.polarity));
        }
        for (bin, want) in bins.iter().zip(&expected) {
            let got: Vec<_> = bin.events().iter().map(|e| (e.x, e.y, e.polarity)).collect();
            prop_assert_eq!(&got, want);
            prop_assert!(bin.events().iter().all(|e| e.t < bin.duration().max(1)));
        }
    }

    #[test]
    fn truncation_keeps_exactly_the_prefix(s in stream_strategy(8, 200), frac in 0.01f64..1.5) {
        let tl = ((s.duration() as f64 * frac) as u32).max(1);
        let cut = truncate_prefix(&s, tl).unwrap();
        let want: Vec<_> = s.events().iter().filter(|e| e.t < tl).copied().collect();
        prop_assert_eq!(cut.events(), &want[..]);
        prop_assert_eq!(cut.duration(), tl.min(s.duration()));
    }

    #[test]
    fn counts_are_conserved(s in stream_strategy(16, 300), k in prop_oneof![Just(1usize), Just(3), Just(5), Just(7)]) {
        let (w, h) = (s.width() as usize, s.height() as usize);
        let cmap = build_count_map(&s, k, h, w).unwrap();
        let brute: u64 = s.events().iter().map(|e| {
            let c = (k / 2) as isize;
            let mut n = 0u64;
            for dy in -c..=c {
                for dx in -c..=c {
                    let (x, y) = (e.x as isize + dx, e.y as isize + dy);
                    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                        n += 1;
                    }
                }
            }
            n
        }).sum();
        prop_assert_eq!(cmap.total(), brute);
        let by_footprint: u64 = s.events().iter()
            .map(|e| footprint_size(e.x as usize, e.y as usize, k, w, h) as u64)
            .sum();
        prop_assert_eq!(by_footprint, brute);
    }

    #[test]
    fn count_map_is_additive_over_stream_splits(s in stream_strategy(12, 200), cut in 0.0f64..=1.0) {
        let (w, h) = (s.width() as usize, s.height() as usize);
        let at = (s.len() as f64 * cut) as usize;
        let (a, b) = s.events().split_at(at);
        let sa = EventStream::new(s.width(), s.height(), s.duration(), a.to_vec()).unwrap();
        let sb = EventStream::new(s.width(), s.height(), s.duration(), b.to_vec()).unwrap();
        let whole = build_count_map(&s, 3, h, w).unwrap();
        let merged = build_count_map(&sa, 3, h, w).unwrap().merged(&build_count_map(&sb, 3, h, w).unwrap()).unwrap();
        prop_assert_eq!(whole, merged);
    }

    #[test]
    fn readout_is_linear_in_the_kernel(
        s in stream_strategy(12, 150),
        (k1, k2) in kernel_strategy().prop_flat_map(|k| {
            let n = k.size();
            (Just(k), proptest::collection::vec(-4i32..=4, n * n)
                .prop_map(move |v| Kernel::new(n, v.into_iter().map(f64::from).collect()).unwrap()))
        }),
        alpha in -3i32..=3,
    ) {
        let (w, h) = (s.width() as usize, s.height() as usize);
        let cmap = build_count_map(&s, k1.size(), h, w).unwrap();
        let r1 = strided_readout(&cmap, &ReadoutBank::depthwise(&k1, 2)).unwrap();
        let r2 = strided_readout(&cmap, &ReadoutBank::depthwise(&k2, 2)).unwrap();
        let combo: Vec<f64> = k1.values().iter().zip(k2.values()).map(|(a, b)| a * alpha as f64 + b).collect();
        let kc = Kernel::new(k1.size(), combo).unwrap();
        let rc = strided_readout(&cmap, &ReadoutBank::depthwise(&kc, 2)).unwrap();
        for ((c, a), b) in rc.values().iter().zip(r1.values()).zip(r2.values()) {
            prop_assert_eq!(*c, a * alpha as f64 + b);
        }
    }

    #[test]
    fn integer_kernels_reproduce_stamping_exactly(s in stream_strategy(12, 150), k in kernel_strategy()) {
        let (w, h) = (s.width() as usize, s.height() as usize);
        let cmap = build_count_map(&s, k.size(), h, w).unwrap();
        let direct = event_conv_reference(&s, &k);
        let via_map = strided_readout(&cmap, &ReadoutBank::depthwise(&k, 2)).unwrap();
        prop_assert_eq!(direct.max_abs_diff(&via_map), 0.0);
    }

    #[test]
    fn readout_matches_per_event_stamping_for_real_kernels(
        s in stream_strategy(20, 400),
        k in prop_oneof![Just(3usize), Just(5)],
        vals in proptest::collection::vec(-1.0f32..1.0, 25),
    ) {
        let kernel = Kernel::new(k, vals[..k * k].to_vec()).unwrap();
        let (w, h) = (s.width() as usize, s.height() as usize);
        let cmap = build_count_map(&s, k, h, w).unwrap();
        let direct = event_conv_reference(&s, &kernel);
        let via_map = strided_readout(&cmap, &ReadoutBank::depthwise(&kernel, 2)).unwrap();
        prop_assert!(direct.max_abs_diff(&via_map) <= 1e-3);
    }

    #[test]
    fn lif_outputs_are_binary(input in proptest::collection::vec(-3.0f64..3.0, 1..=60), t_steps in 1usize..=6) {
        let n = input.len() / t_steps;
        prop_assume!(n > 0);
        let x = &input[..n * t_steps];
        let (spikes, _) = lif_scan(x, t_steps, &LifParams::default(), SpikeMode::Hard);
        prop_assert!(spikes.iter().all(|&s| s == 0.0 || s == 1.0));
    }

    #[test]
    fn primitive_vjps_match_finite_differences(
        a in tensor(&[3, 4]),
        b in tensor(&[4, 2]),
        x in tensor(&[1, 2, 4, 4]),
        w in tensor(&[2, 2, 3, 3]),
    ) {
        let mm = check_gradients(&[a.clone(), b], 1e-5, |g: &mut Graph<f64>, v| {
            let y = g.matmul(v[0], v[1])?;
            let y = g.mul(y, y)?;
            Ok(g.sum_all(y))
        }).unwrap();
        prop_assert!(mm.max_rel_error < 1e-4, "matmul {}", mm.max_rel_error);

        let conv = check_gradients(&[x, w], 1e-5, |g: &mut Graph<f64>, v| {
            let y = g.conv2d(v[0], v[1], None, Conv2dSpec { stride: 1, padding: 1, groups: 1 })?;
            let y = g.mul(y, y)?;
            Ok(g.sum_all(y))
        }).unwrap();
        prop_assert!(conv.max_rel_error < 1e-4, "conv2d {}", conv.max_rel_error);

        let sm = check_gradients(&[a], 1e-5, |g: &mut Graph<f64>, v| {
            let y = g.softmax(v[0])?;
            let z = g.mul(y, y)?;
            Ok(g.sum_all(z))
        }).unwrap();
        prop_assert!(sm.max_rel_error < 1e-4, "softmax {}", sm.max_rel_error);
    }
}
