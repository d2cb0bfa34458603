"""!@file file_tools.py
@brief File discovery for training images and metrics files.
@details Directories are walked recursively (hidden directories skipped); wildcard patterns are resolved with glob.
@version 0.1.0
@date_created 2025-02-26
@date_modified 2025-03-28
@author Leland Green
@license MIT
"""
import glob
import os

from spinner import Spinner


def find_files_in_directory(directory_path, supported_extensions, verbose=False) -> list[str]:
    """!
    @brief Finds every file below a directory with one of the given extensions.
    @param directory_path The directory to search in.
    @param supported_extensions Lower-case extensions to keep (e.g. '.pgm', '.ppm').
    @param verbose Show a progress spinner while scanning.
    @return Sorted list of matching paths (sorted so that runs are reproducible).
    """
    if not os.path.isdir(directory_path):
        raise FileNotFoundError(f"Not a directory: {directory_path}")
    spinner = Spinner("{time} Scanning files...", enabled=verbose)
    found = []
    for root, dirs, files in os.walk(directory_path):
        dirs[:] = [d for d in dirs if not d.startswith(".")]
        spinner.spin(f"Scanning {len(files)} files in {root}...")
        for file in files:
            if os.path.splitext(file)[1].lower() in supported_extensions:
                found.append(os.path.join(root, file))
    spinner.print_it(f"Found {len(found)} matching files.", end="\n")
    return sorted(found)


def get_matching_files(patterns: list[str], supported_extensions: list[str] | None = None,
                       verbose=False) -> list[str]:
    """!
    @brief Resolves file names and wildcard patterns, in the order given.
    @param patterns File names or glob patterns (e.g. 'runs/*/metrics.csv').
    @param supported_extensions Extensions to keep; None keeps everything.
    @param verbose Show a progress spinner while matching.
    @return Matching files. A pattern without wildcards that names an existing file is kept as is.
    """
    matched_files = []
    spinner = Spinner(enabled=verbose)
    for pattern in patterns:
        spinner.spin("{time} Matching files for: " + pattern)
        candidates = sorted(glob.glob(pattern, recursive=True)) if glob.has_magic(pattern) else [pattern]
        for file in candidates:
            if not os.path.isfile(file):
                continue
            if supported_extensions is None or os.path.splitext(file)[1].lower() in supported_extensions:
                matched_files.append(file)
    return matched_files
