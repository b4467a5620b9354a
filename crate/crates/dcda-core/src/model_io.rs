//! Versioned model parameter file.
//!
//! Human-readable text: one header line, one section per network listing
//! each layer's shape, activation and row-major values, then a centroid
//! block. Values are written in scientific notation with 17 significant
//! digits, which round-trips every finite f64 bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{DcdaModel, NUM_CLASSES};
use crate::nn::{Activation, Layer, LayerStack};

const FORMAT_HEADER: &str = "dcda-model 1";

fn write_values(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:.16e}").expect("writing to String cannot fail");
    }
    out.push('\n');
}

fn render_stack(out: &mut String, name: &str, stack: &LayerStack) {
    writeln!(out, "section {name} {}", stack.layers().len()).unwrap();
    for (i, layer) in stack.layers().iter().enumerate() {
        writeln!(
            out,
            "layer {i} in {} out {} activation {}",
            layer.in_dim(),
            layer.out_dim(),
            layer.activation.name()
        )
        .unwrap();
        writeln!(out, "weights").unwrap();
        for r in 0..layer.weights.rows() {
            write_values(out, layer.weights.row(r));
        }
        writeln!(out, "bias").unwrap();
        write_values(out, &layer.bias);
    }
}

/// Serializes the model to the versioned text format.
pub fn to_string(model: &DcdaModel) -> String {
    let mut out = String::new();
    writeln!(out, "{FORMAT_HEADER}").unwrap();
    render_stack(&mut out, "feature_extractor", &model.feature_extractor);
    render_stack(&mut out, "classifier", &model.classifier);
    render_stack(&mut out, "discriminator", &model.discriminator);
    writeln!(
        out,
        "centroids {} {}",
        model.centroids.rows(),
        model.centroids.cols()
    )
    .unwrap();
    for r in 0..model.centroids.rows() {
        write_values(&mut out, model.centroids.row(r));
    }
    out.push_str("end\n");
    out
}

pub fn save(model: &DcdaModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(model)).map_err(|e| Error::io(path.display().to_string(), e))
}

struct LineReader<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        LineReader {
            lines: text.lines(),
            line_no: 0,
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        loop {
            self.line_no += 1;
            match self.lines.next() {
                Some(line) if line.trim().is_empty() => continue,
                Some(line) => return Ok(line.trim()),
                None => {
                    return Err(Error::ModelFormat(format!(
                        "unexpected end of file after line {}",
                        self.line_no - 1
                    )))
                }
            }
        }
    }

    fn bail<T>(&self, message: impl std::fmt::Display) -> Result<T> {
        Err(Error::ModelFormat(format!(
            "line {}: {message}",
            self.line_no
        )))
    }

    fn values(&mut self, expected: usize) -> Result<Vec<f64>> {
        let line = self.next()?;
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.len() == expected => Ok(v),
            Ok(v) => self.bail(format!("expected {expected} values, found {}", v.len())),
            Err(e) => self.bail(format!("bad value: {e}")),
        }
    }
}

fn parse_stack(reader: &mut LineReader, name: &str) -> Result<LayerStack> {
    let header = reader.next()?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "section" || parts[1] != name {
        return reader.bail(format!("expected `section {name} <layers>`, found `{header}`"));
    }
    let n_layers: usize = parts[2]
        .parse()
        .map_err(|_| Error::ModelFormat(format!("bad layer count `{}`", parts[2])))?;
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let line = reader.next()?;
        let p: Vec<&str> = line.split_whitespace().collect();
        if p.len() != 8 || p[0] != "layer" || p[2] != "in" || p[4] != "out" || p[6] != "activation"
        {
            return reader.bail(format!("bad layer header `{line}`"));
        }
        let idx: usize = p[1].parse().unwrap_or(usize::MAX);
        if idx != i {
            return reader.bail(format!("layer index {idx}, expected {i}"));
        }
        let in_dim: usize = p[3]
            .parse()
            .map_err(|_| Error::ModelFormat(format!("bad in dim `{}`", p[3])))?;
        let out_dim: usize = p[5]
            .parse()
            .map_err(|_| Error::ModelFormat(format!("bad out dim `{}`", p[5])))?;
        let activation = Activation::from_name(p[7])?;

        if reader.next()? != "weights" {
            return reader.bail("expected `weights`");
        }
        let mut weights = Matrix::zeros(in_dim, out_dim);
        for r in 0..in_dim {
            let row = reader.values(out_dim)?;
            weights.row_mut(r).copy_from_slice(&row);
        }
        if reader.next()? != "bias" {
            return reader.bail("expected `bias`");
        }
        let bias = reader.values(out_dim)?;
        if !weights.all_finite() || !bias.iter().all(|v| v.is_finite()) {
            return reader.bail("non-finite parameter value");
        }
        layers.push(Layer {
            weights,
            bias,
            activation,
        });
    }
    LayerStack::new(layers)
}

/// Parses the versioned text format back into a model.
pub fn from_string(text: &str) -> Result<DcdaModel> {
    let mut reader = LineReader::new(text);
    let header = reader.next()?;
    if header != FORMAT_HEADER {
        return Err(Error::ModelFormat(format!(
            "unsupported header `{header}` (expected `{FORMAT_HEADER}`)"
        )));
    }
    let feature_extractor = parse_stack(&mut reader, "feature_extractor")?;
    let classifier = parse_stack(&mut reader, "classifier")?;
    let discriminator = parse_stack(&mut reader, "discriminator")?;

    let line = reader.next()?;
    let p: Vec<&str> = line.split_whitespace().collect();
    if p.len() != 3 || p[0] != "centroids" {
        return reader.bail(format!("expected `centroids <rows> <cols>`, found `{line}`"));
    }
    let rows: usize = p[1]
        .parse()
        .map_err(|_| Error::ModelFormat(format!("bad centroid rows `{}`", p[1])))?;
    let cols: usize = p[2]
        .parse()
        .map_err(|_| Error::ModelFormat(format!("bad centroid cols `{}`", p[2])))?;
    if rows != NUM_CLASSES {
        return reader.bail(format!("centroids must have {NUM_CLASSES} rows, found {rows}"));
    }
    let mut centroids = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let row = reader.values(cols)?;
        centroids.row_mut(r).copy_from_slice(&row);
    }
    if reader.next()? != "end" {
        return reader.bail("expected `end`");
    }

    let model = DcdaModel {
        feature_extractor,
        classifier,
        discriminator,
        centroids,
    };
    model.validate()?;
    Ok(model)
}

pub fn load(path: &Path) -> Result<DcdaModel> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_string(&text)
}
