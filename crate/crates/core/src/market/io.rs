use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_market, MarketError, MarketInstance, RawMarket};

/// On-disk market layout. Item order follows `supplies`; buyer order is file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketFile {
    pub supplies: Vec<f64>,
    pub buyers: Vec<BuyerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerRecord {
    pub id: String,
    pub group: i64,
    pub budget: f64,
    pub valuations: Vec<f64>,
}

impl MarketFile {
    pub fn into_market(self) -> Result<MarketInstance, MarketError> {
        let n = self.buyers.len();
        let mut raw = RawMarket {
            supplies: self.supplies,
            valuations: Vec::with_capacity(n),
            budgets: Vec::with_capacity(n),
            groups: Vec::with_capacity(n),
            max_valuation: None,
            buyer_ids: Some(Vec::with_capacity(n)),
        };
        for b in self.buyers {
            raw.valuations.push(b.valuations);
            raw.budgets.push(b.budget);
            raw.groups.push(b.group);
            raw.buyer_ids.as_mut().unwrap().push(b.id);
        }
        validate_market(raw)
    }
}

impl From<&MarketInstance> for MarketFile {
    fn from(market: &MarketInstance) -> Self {
        MarketFile {
            supplies: market.supplies().to_vec(),
            buyers: (0..market.n())
                .map(|i| BuyerRecord {
                    id: market.buyer_ids()[i].clone(),
                    group: market.groups()[i] as i64,
                    budget: market.budgets()[i],
                    valuations: market.valuation_row(i).to_vec(),
                })
                .collect(),
        }
    }
}

impl MarketInstance {
    pub fn from_json_str(s: &str) -> Result<Self, MarketError> {
        let file: MarketFile =
            serde_json::from_str(s).map_err(|e| MarketError::Parse(e.to_string()))?;
        file.into_market()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&MarketFile::from(self)).expect("market serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MarketError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| MarketError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json_string())
    }
}
