use ceei::data::{make_biased_market, synth_market};
use ceei::{MarketError, MarketInstance};
use tempfile::TempDir;

#[test]
fn save_and_load_round_trip() {
    let dir = TempDir::new().unwrap();
    let market = make_biased_market(&synth_market(12, 7, 0.3, 4).unwrap(), 0.8).unwrap();
    let path = dir.path().join("market.json");
    market.save(&path).unwrap();
    let loaded = MarketInstance::load(&path).unwrap();
    assert_eq!(loaded.valuations(), market.valuations());
    assert_eq!(loaded.budgets(), market.budgets());
    assert_eq!(loaded.supplies(), market.supplies());
    assert_eq!(loaded.groups(), market.groups());
    assert_eq!(loaded.buyer_ids(), market.buyer_ids());
}

#[test]
fn load_rejects_bad_files() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"supplies":[1],"buyers":[{"id":"a","group":2,"budget":1,"valuations":[1]}]}"#)
        .unwrap();
    assert!(matches!(MarketInstance::load(&path), Err(MarketError::InvalidGroupLabel { buyer: 0, label: 2 })));
    std::fs::write(&path, r#"{"supplies":[1],"buyers":[],"extra":true}"#).unwrap();
    assert!(matches!(MarketInstance::load(&path), Err(MarketError::Parse(_))));
    assert!(MarketInstance::load(dir.path().join("missing.json")).is_err());
}
