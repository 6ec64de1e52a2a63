"""Column layouts of every tabular artifact the pipeline reads or writes."""

COORDINATE_COLUMNS = ['x', 'y', 'z']
MARK_COLUMN = 'mark'
DEFAULT_MARK = 0


def point_columns(dimension: int, with_mark: bool = True) -> list:
    if not 1 <= dimension <= len(COORDINATE_COLUMNS):
        raise ValueError(f"point patterns support 1 to {len(COORDINATE_COLUMNS)} coordinates, got {dimension}")
    columns = COORDINATE_COLUMNS[:dimension]
    return columns + [MARK_COLUMN] if with_mark else columns


CALIBRATION_COLUMNS = [
    'replicate', 'seed', 'n_points', 'statistic', 'p_value', 'reject', 'status', 'error'
]

# per-cell residual table; one value column per test function is appended
CELL_RESIDUAL_COLUMNS = ['cell', 'subdomain']

REPORT_FILES = {
    'manifest': 'manifest.json',
    'fit': 'fit.json',
    'residuals': 'residuals.json',
    'cell_residuals': 'cell_residuals.csv',
    'gof': 'gof_report.json',
    'calibration': 'calibration.csv',
    'calibration_summary': 'calibration.json',
    'error': 'error.json',
}


def replicate_file(index: int) -> str:
    return f"pattern_{index:04d}.csv"
