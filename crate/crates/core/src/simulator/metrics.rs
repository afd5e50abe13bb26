use serde::Serialize;

pub const CSV_HEADER: &str = "round,acc,loss,down_bytes,up_bytes,cum_down,cum_up,flops";

/// What happened in one round. Byte counts are the serialized sizes actually
/// produced (compressed weight matrices plus raw 32-bit biases) summed over
/// the sampled clients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundMetrics {
    /// 1-based index of the round just completed.
    pub round: usize,
    /// Test accuracy, present on evaluation rounds only.
    #[serde(rename = "acc")]
    pub accuracy: Option<f64>,
    pub loss: Option<f64>,
    pub down_bytes: u64,
    pub up_bytes: u64,
    pub cum_down: u64,
    pub cum_up: u64,
    /// Estimated client training FLOPs for the round.
    pub flops: u64,
}

impl RoundMetrics {
    /// One CSV row matching [`CSV_HEADER`]; unevaluated fields are empty.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.round,
            opt(self.accuracy),
            opt(self.loss),
            self.down_bytes,
            self.up_bytes,
            self.cum_down,
            self.cum_up,
            self.flops
        )
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_formats() {
        let m = RoundMetrics {
            round: 2,
            accuracy: Some(0.5),
            loss: None,
            down_bytes: 10,
            up_bytes: 5,
            cum_down: 20,
            cum_up: 9,
            flops: 7,
        };
        assert_eq!(m.csv_row(), "2,0.5,,10,5,20,9,7");
        assert_eq!(CSV_HEADER.split(',').count(), m.csv_row().split(',').count());
        let v: serde_json::Value = serde_json::from_str(&m.json_line()).unwrap();
        assert_eq!(v["acc"], 0.5);
        assert!(v["loss"].is_null());
    }
}
