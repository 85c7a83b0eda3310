#!/usr/bin/env python3
"""
Cleanup script for experiment outputs.
Shows and removes generated CSVs and plots in the results directory.
"""

import argparse
import glob
import os
import sys
from datetime import datetime, timedelta

from dotenv import load_dotenv

# Output kind -> file pattern inside the results directory
OUTPUT_PATTERNS = {
    'raw': '*_raw.csv',
    'aggregate': '*_aggregate.csv',
    'plots': '*.svg',
}


class ResultsCleanup:
    def __init__(self, results_dir=None):
        self.results_dir = results_dir or os.getenv('RL_RESULTS_DIR', 'results')

    def get_files(self, kind):
        if not os.path.isdir(self.results_dir):
            return []
        return sorted(glob.glob(os.path.join(self.results_dir, OUTPUT_PATTERNS[kind])))

    def format_size(self, size_bytes):
        """Format file size in human-readable format"""
        for unit in ['B', 'KB', 'MB', 'GB']:
            if size_bytes < 1024.0:
                return f"{size_bytes:.1f} {unit}"
            size_bytes /= 1024.0
        return f"{size_bytes:.1f} TB"

    def show_status(self):
        print("=" * 60)
        print(f"RESULTS DIRECTORY STATUS ({self.results_dir})")
        print("=" * 60)
        if not os.path.isdir(self.results_dir):
            print("Directory does not exist")
            return {}

        status = {}
        for kind in OUTPUT_PATTERNS:
            files = self.get_files(kind)
            total = sum(os.path.getsize(f) for f in files)
            status[kind] = len(files)
            print(f"  {kind:<10} {len(files):4d} file(s), {self.format_size(total)}")
        return status

    def clean(self, kinds=None, dry_run=False, older_than_days=None):
        """Delete output files of the given kinds; returns the paths removed (or that would be)"""
        kinds = kinds or list(OUTPUT_PATTERNS)
        cutoff = datetime.now() - timedelta(days=older_than_days) if older_than_days else None

        targets = []
        for kind in kinds:
            for path in self.get_files(kind):
                if cutoff and datetime.fromtimestamp(os.path.getmtime(path)) >= cutoff:
                    continue
                targets.append(path)

        print(f"{'DRY RUN: ' if dry_run else ''}{len(targets)} file(s) to delete from {self.results_dir}")
        for path in targets[:3]:
            print(f"    - {os.path.basename(path)} ({self.format_size(os.path.getsize(path))})")
        if len(targets) > 3:
            print(f"    ... and {len(targets) - 3} more files")

        if dry_run:
            return targets

        for path in targets:
            try:
                os.remove(path)
            except OSError as e:
                print(f"Error deleting {path}: {e}")
        return targets


def main():
    load_dotenv()
    parser = argparse.ArgumentParser(description='Clean experiment outputs')
    parser.add_argument('--dir', help='Results directory (default RL_RESULTS_DIR or ./results)')
    parser.add_argument('--status', action='store_true', help='Show what is in the results directory')
    parser.add_argument('--clean', nargs='*', choices=list(OUTPUT_PATTERNS),
                        help='Delete outputs of these kinds (all kinds when none given)')
    parser.add_argument('--older-than', type=int, metavar='DAYS', help='Only delete files older than N days')
    parser.add_argument('--dry-run', action='store_true', help='Show what would be deleted')
    args = parser.parse_args()

    if not args.status and args.clean is None:
        parser.print_help()
        sys.exit(2)

    cleanup = ResultsCleanup(args.dir)
    if args.status:
        cleanup.show_status()
    if args.clean is not None:
        cleanup.clean(args.clean or None, dry_run=args.dry_run, older_than_days=args.older_than)


if __name__ == "__main__":
    main()
