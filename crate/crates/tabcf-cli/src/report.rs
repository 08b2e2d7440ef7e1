//! Plain-text table rendering shared by the reporting commands, plus the
//! vector-graphics utilization chart. Everything here is a pure function
//! of its inputs so reports are byte-stable across reruns.

/// Renders an optional metric; absent means "not applicable here", shown
/// as a dash (for example categorical sparsity of a method that cannot
/// touch categorical features).
pub fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "-".to_string(),
    }
}

/// Left-aligned monospace table with a header rule.
pub fn aligned_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let render = |cells: Vec<&str>| -> String {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(&format!("{cell:<w$}", w = widths[i]));
        }
        line.trim_end().to_string()
    };
    let mut out = render(headers.to_vec());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in rows {
        out.push_str(&render(row.iter().map(|s| s.as_str()).collect()));
        out.push('\n');
    }
    out
}

/// A 5x5 grid of cells as an aligned heat table; rows are indexed by the
/// first axis values, columns by the second.
pub fn heat_table(
    title: &str,
    row_label: &str,
    col_label: &str,
    axis: &[f64],
    cell: impl Fn(usize, usize) -> String,
) -> String {
    let mut headers: Vec<String> = vec![format!("{row_label} \\ {col_label}")];
    for v in axis {
        headers.push(format!("{v:.2}"));
    }
    let header_refs: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
    let mut rows = Vec::new();
    for (i, v) in axis.iter().enumerate() {
        let mut row = vec![format!("{v:.2}")];
        for j in 0..axis.len() {
            row.push(cell(i, j));
        }
        rows.push(row);
    }
    format!("{title}\n{}", aligned_table(&header_refs, &rows))
}

/// A horizontal bar for text histograms: `value` in [0, 1] scaled to
/// twenty characters.
pub fn bar(value: f64) -> String {
    let filled = (value.clamp(0.0, 1.0) * 20.0).round() as usize;
    format!("{}{}", "#".repeat(filled), ".".repeat(20 - filled))
}

/// Fixed fill colors per method, in report order.
fn method_color(method: &str) -> &'static str {
    match method {
        "tabcf" => "#4c78a8",
        "wachter" => "#f58518",
        "dice_like" => "#54a24b",
        _ => "#9e9e9e",
    }
}

/// Grouped-bar chart of per-feature utilization rates, one group per
/// feature and one bar per method, as a standalone SVG document.
pub fn utilization_svg(
    feature_names: &[String],
    methods: &[(String, Vec<f64>)],
) -> String {
    let n_features = feature_names.len();
    let n_methods = methods.len().max(1);
    let bar_w = 18.0;
    let gap = 14.0;
    let group_w = bar_w * n_methods as f64 + gap;
    let margin_left = 40.0;
    let chart_h = 160.0;
    let top = 30.0;
    let width = margin_left + group_w * n_features as f64 + 20.0;
    let height = top + chart_h + 60.0;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"monospace\" font-size=\"10\">\n"
    ));
    s.push_str("<text x=\"6\" y=\"16\" font-size=\"12\">feature utilization rate</text>\n");
    // y axis: 0 and 1 marks
    for (v, label) in [(0.0, "0"), (0.5, "0.5"), (1.0, "1")] {
        let y = top + chart_h * (1.0 - v);
        s.push_str(&format!(
            "<line x1=\"{x0:.1}\" y1=\"{y:.1}\" x2=\"{x1:.1}\" y2=\"{y:.1}\" \
             stroke=\"#cccccc\" stroke-width=\"1\"/>\n",
            x0 = margin_left,
            x1 = width - 10.0,
        ));
        s.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{ty:.1}\" text-anchor=\"end\">{label}</text>\n",
            x = margin_left - 6.0,
            ty = y + 3.0,
        ));
    }
    for (f, name) in feature_names.iter().enumerate() {
        let gx = margin_left + group_w * f as f64;
        for (m, (method, values)) in methods.iter().enumerate() {
            let v = values.get(f).copied().unwrap_or(0.0).clamp(0.0, 1.0);
            let h = chart_h * v;
            let x = gx + bar_w * m as f64;
            let y = top + chart_h - h;
            s.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{w:.1}\" height=\"{h:.1}\" \
                 fill=\"{color}\"><title>{method} {name}: {v:.3}</title></rect>\n",
                w = bar_w - 2.0,
                color = method_color(method),
            ));
        }
        s.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"middle\">{name}</text>\n",
            x = gx + (group_w - gap) / 2.0,
            y = top + chart_h + 14.0,
        ));
    }
    // legend
    for (m, (method, _)) in methods.iter().enumerate() {
        let y = top + chart_h + 30.0 + 14.0 * m as f64;
        s.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{ry:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n",
            x = margin_left,
            ry = y - 9.0,
            color = method_color(method),
        ));
        s.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\">{method}</text>\n",
            x = margin_left + 16.0,
        ));
    }
    s.push_str("</svg>\n");
    s
}
