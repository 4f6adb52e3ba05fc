//! Grid argument parsing: `start:end:step` ranges or comma lists.

pub fn parse_f64_grid(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty grid".into());
    }
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:end:step, got '{s}'"));
        }
        let start: f64 = parts[0].parse().map_err(|e| format!("bad start: {e}"))?;
        let end: f64 = parts[1].parse().map_err(|e| format!("bad end: {e}"))?;
        let step: f64 = parts[2].parse().map_err(|e| format!("bad step: {e}"))?;
        if step <= 0.0 || step.is_nan() || end < start {
            return Err(format!("degenerate range '{s}'"));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize;
        let mut values = Vec::with_capacity(count + 1);
        for i in 0..=count {
            // shed accumulated float dust so 0.05 * 6 prints as 0.3
            let v = ((start + step * i as f64) * 1e12).round() / 1e12;
            values.push(if v > end { end } else { v });
        }
        Ok(values)
    } else {
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad value '{p}': {e}"))
            })
            .collect()
    }
}

pub fn parse_usize_grid(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty grid".into());
    }
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:end:step, got '{s}'"));
        }
        let start: usize = parts[0].parse().map_err(|e| format!("bad start: {e}"))?;
        let end: usize = parts[1].parse().map_err(|e| format!("bad end: {e}"))?;
        let step: usize = parts[2].parse().map_err(|e| format!("bad step: {e}"))?;
        if step == 0 || end < start {
            return Err(format!("degenerate range '{s}'"));
        }
        Ok((start..=end).step_by(step).collect())
    } else {
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|e| format!("bad value '{p}': {e}"))
            })
            .collect()
    }
}
