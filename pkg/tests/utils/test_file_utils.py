"""
Tests for the file_utils module.
"""

import os
import shutil
import sys
import tempfile
import unittest

# Add parent directory to path to import utils modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from utils.file_utils import (
    atomic_write_text,
    get_file_extension,
    is_regular_file_under,
    output_path,
    slugify,
)


class TestFileUtils(unittest.TestCase):
    """Test cases for file utility functions."""

    def setUp(self):
        """Set up test environment."""
        self.test_dir = tempfile.mkdtemp()

        self.test_file_path = os.path.join(self.test_dir, "report.json")
        with open(self.test_file_path, "w") as f:
            f.write("{}\n")

        self.symlink_path = os.path.join(self.test_dir, "symlink.json")
        os.symlink(self.test_file_path, self.symlink_path)

        self.subdir = os.path.join(self.test_dir, "subdir")
        os.makedirs(self.subdir)

        self.outside_dir = tempfile.mkdtemp()
        self.outside_file = os.path.join(self.outside_dir, "other.json")
        with open(self.outside_file, "w") as f:
            f.write("{}\n")

    def tearDown(self):
        """Clean up test environment."""
        shutil.rmtree(self.test_dir, ignore_errors=True)
        shutil.rmtree(self.outside_dir, ignore_errors=True)

    def test_is_regular_file_under(self):
        """Test the regular-file check."""
        # Valid file inside the root
        self.assertTrue(is_regular_file_under(self.test_file_path, self.test_dir))

        # Non-existent file
        self.assertFalse(is_regular_file_under(os.path.join(self.test_dir, "missing.json"), self.test_dir))

        # Directory
        self.assertFalse(is_regular_file_under(self.subdir, self.test_dir))

        # Symbolic link
        self.assertFalse(is_regular_file_under(self.symlink_path, self.test_dir))

        # File outside the root
        self.assertFalse(is_regular_file_under(self.outside_file, self.test_dir))

    def test_get_file_extension(self):
        """Test getting file extensions."""
        self.assertEqual(get_file_extension("report.json"), "json")
        self.assertEqual(get_file_extension("function-u.csv"), "csv")
        self.assertEqual(get_file_extension("/path/to/experiment.yaml"), "yaml")
        self.assertEqual(get_file_extension("SUMMARY.CSV"), "csv")
        self.assertIsNone(get_file_extension("README"))

    def test_slugify(self):
        """Test file-name components."""
        self.assertEqual(slugify("affine-field-gagliardo"), "affine-field-gagliardo")
        self.assertEqual(slugify("viscosity supersolution"), "viscosity-supersolution")
        self.assertEqual(slugify("pair/0: check"), "pair-0-check")
        self.assertEqual(slugify("  "), "unnamed")

    def test_output_path(self):
        """Test the layout of output files."""
        path = output_path(self.test_dir, "arctan layer", "layer-oracle", "json")
        self.assertEqual(path, os.path.join(os.path.abspath(self.test_dir), "arctan-layer", "layer-oracle.json"))

    def test_atomic_write_text(self):
        """Test atomic writes create parents and replace content."""
        target = os.path.join(self.test_dir, "nested", "deeper", "out.csv")
        written = atomic_write_text(target, "node,x,value\n")
        self.assertEqual(written, os.path.abspath(target))
        with open(target) as f:
            self.assertEqual(f.read(), "node,x,value\n")

        atomic_write_text(target, "replaced\n")
        with open(target) as f:
            self.assertEqual(f.read(), "replaced\n")
        leftovers = [name for name in os.listdir(os.path.dirname(target)) if name.startswith(".tmp-")]
        self.assertEqual(leftovers, [])


if __name__ == '__main__':
    unittest.main()
