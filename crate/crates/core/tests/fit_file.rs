use gaga::inference::Hyper;
use gaga::io::FitFile;
use gaga::Error;

const EXAMPLE: &str = include_str!("../../../docs/example_fit.json");

#[test]
fn example_round_trips_byte_for_byte() {
    let fit = FitFile::from_json(EXAMPLE).unwrap();
    assert_eq!(fit.to_json().unwrap(), EXAMPLE);
    let Hyper::GaGa(h) = &fit.hyper else { panic!("expected a gaga fit") };
    assert_eq!(h.alpha0, 23.189485788111124);
    assert_eq!(fit.pattern_set().unwrap().len(), 2);
    assert_eq!(fit.group_names, ["1", "2"]);
    assert!(fit.loglik_trace.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn other_versions_are_rejected() {
    let bumped = EXAMPLE.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    assert!(matches!(FitFile::from_json(&bumped), Err(Error::FitFormat(_))));
    let truncated = &EXAMPLE[..EXAMPLE.len() / 2];
    assert!(FitFile::from_json(truncated).is_err());
}
