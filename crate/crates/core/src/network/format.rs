use super::{Network, NetworkDef};
use crate::error::NetworkError;

/// Parses and validates a JSON network description.
pub fn load_network(text: &[u8]) -> Result<Network, NetworkError> {
    let def: NetworkDef = serde_json::from_slice(text).map_err(|e| NetworkError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Network::new(def)
}

/// Serializes a network to the JSON format read by [`load_network`].
pub fn save_network(net: &Network) -> String {
    serde_json::to_string_pretty(net.def()).expect("network serializes")
}
