use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::CliError;

/// Writes output files into one directory, each starting with the same
/// provenance comment line.
pub struct OutputDir {
    dir: PathBuf,
    header: String,
    plots: bool,
}

impl OutputDir {
    pub fn create(config: &RunConfig, command: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(&config.out_dir)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", config.out_dir.display())))?;
        let header = format!(
            "# ipw {} command={command} config_sha256={} seed={}",
            env!("CARGO_PKG_VERSION"),
            config.sha256(),
            config.seed
        );
        Ok(OutputDir { dir: config.out_dir.clone(), header, plots: config.plots })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_csv<F>(&self, name: &str, body: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut dyn Write) -> io::Result<()>,
    {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| io_error(&path, e))?);
        writeln!(w, "{}", self.header)
            .and_then(|_| body(&mut w))
            .and_then(|_| w.flush())
            .map_err(|e| io_error(&path, e))?;
        println!("wrote {}", path.display());
        Ok(path)
    }

    /// gnuplot script for `csv`, written only when plots are enabled.
    pub fn plot(&self, name: &str, plot: &Plot) -> Result<(), CliError> {
        if !self.plots {
            return Ok(());
        }
        let path = self.path(name);
        std::fs::write(&path, plot.script(&self.header)).map_err(|e| io_error(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

pub struct Plot {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub log_x: bool,
    pub log_y: bool,
    /// (csv file, x column, y column, legend)
    pub series: Vec<(String, usize, usize, String)>,
}

impl Plot {
    fn script(&self, header: &str) -> String {
        let mut s = format!("{header}\nset datafile separator ','\nset datafile commentschars '#'\n");
        s += &format!("set title '{}'\nset xlabel '{}'\nset ylabel '{}'\n", self.title, self.xlabel, self.ylabel);
        if self.log_x {
            s += "set logscale x\n";
        }
        if self.log_y {
            s += "set logscale y\n";
        }
        let series: Vec<String> = self
            .series
            .iter()
            .map(|(file, x, y, legend)| format!("'{file}' every ::1 using {x}:{y} with linespoints title '{legend}'"))
            .collect();
        s += &format!("plot {}\n", series.join(", \\\n     "));
        s
    }
}
