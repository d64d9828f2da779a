//! Bundled example networks.

use crate::error::Result;
use crate::io::parse_network;
use crate::model::Ctbn;

/// A three-state pressure process started uniformly on steady and rising.
pub const BAROMETER: &str = include_str!("../fixtures/barometer.ctbn");
/// Two binary variables, each conditioned on the other.
pub const WZ: &str = include_str!("../fixtures/wz.ctbn");
/// Binary Z conditioned on binary Y.
pub const YZ: &str = include_str!("../fixtures/yz.ctbn");
/// A three-variable chain, X -> Y -> Z, with three-valued X.
pub const CHAIN3: &str = include_str!("../fixtures/chain3.ctbn");
/// Eight-variable drug effect network with a feedback cycle through eating,
/// stomach fullness and hunger.
pub const DRUG: &str = include_str!("../fixtures/drug.ctbn");

pub const ALL: [(&str, &str); 5] =
    [("barometer", BAROMETER), ("wz", WZ), ("yz", YZ), ("chain3", CHAIN3), ("drug", DRUG)];

pub fn barometer() -> Result<Ctbn> {
    parse_network(BAROMETER)
}

pub fn wz() -> Result<Ctbn> {
    parse_network(WZ)
}

pub fn yz() -> Result<Ctbn> {
    parse_network(YZ)
}

pub fn chain3() -> Result<Ctbn> {
    parse_network(CHAIN3)
}

pub fn drug() -> Result<Ctbn> {
    parse_network(DRUG)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::to_canonical_json;
    use crate::model::tests::{chain_model, wz_model, yz_model};

    #[test]
    fn all_parse_and_are_canonical() {
        for (name, text) in ALL {
            let net = parse_network(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(to_canonical_json(&net), text, "{name} is not in canonical form");
        }
    }

    #[test]
    fn fixtures_match_hand_built_models() {
        assert_eq!(wz().unwrap(), wz_model());
        assert_eq!(yz().unwrap(), yz_model(1.0));
        assert_eq!(chain3().unwrap(), chain_model());
    }

    #[test]
    fn drug_network_shape() {
        let net = drug().unwrap();
        assert_eq!(net.len(), 8);
        let e = net.var_by_name("Eating").unwrap();
        let h = net.var_by_name("Hungry").unwrap();
        assert_eq!(net.parents(e), &[h]);
        let q = net.cim(e);
        assert_eq!(q.components()[0].rate(0, 1), 0.01);
        assert_eq!(q.components()[0].rate(1, 0), 10.0);
        assert_eq!(q.components()[1].rate(0, 1), 2.0);
        assert_eq!(q.components()[1].rate(1, 0), 0.01);
        assert_eq!(net.joint_size(), 864);
    }
}
