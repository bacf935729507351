"""Basic tests for the ghost-imaging bench"""

import os

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def test_import():
    """Test that we can import the main modules"""
    from optics import config, propagation, scene
    from simulation import analysis, correlation, speckle_oracle
    import results_schema
    assert scene.BENCH_DEFAULTS["slit_count"] == 2
    assert propagation.KERNEL_BLOCK_ROWS > 0
    assert callable(config.parse_scene_config)
    assert callable(correlation.full_profile)
    assert callable(analysis.visibility)
    assert speckle_oracle.ORACLE_DEFAULTS["realizations"] == 20000
    assert results_schema.software_version() == "1.0.0"


def test_version():
    """Test version file exists and is correct"""
    with open(os.path.join(ROOT, "VERSION"), "r") as f:
        version = f.read().strip()
    assert version == '1.0.0'
