"""ghostbench: desk-scale pseudo-thermal ghost imaging simulation bench."""

from .errors import ConfigError, GhostbenchError, SolverError
from .optics import (ObjectMask, OpticalConfig, SlitGeometry, coherence_length,
                     config_for_coherence_length, grid_coords, load_config,
                     load_mask_pgm, make_double_slit, save_config, save_mask_pgm)
from .speckle import (SpeckleFrame, SpeckleStats, aperture_sample_count,
                      export_frame_pgm, intensity_stats, synthesize_frame)
from .forward import MeasurementRecord, MeasurementSet, bucket_measure, run_campaign
from .recon_gi import GiImage, gi_reconstruct, write_image_csv
from .recon_gics import (GicsParams, SensingSystem, SolveReport, build_sensing,
                         gics_reconstruct, gpsr_solve, ista_reference,
                         kkt_residual, lasso_objective, soft_threshold,
                         write_solve_csv)
from .metrics import (ReconImage, minmax_normalize, mse, psnr, recon_snr, slit_dip)
from .harness import (Scenario, load_scenario, parse_scenario_text, run_scenario,
                      selftest, trend_experiment)

__version__ = "0.1.0"
