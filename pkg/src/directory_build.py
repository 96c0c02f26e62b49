from pathlib import Path

import src.config as config

class BuildResultsDirectory:

    def __init__(self,
                results_path = None,
                result_extensions = None,
                result_stems = None,
                ):
        """
        Defaults to all parameters as set in config.py; overrides parameters when stated in function call.
        @param results_path: directory that receives campaign, sweep and verification files
        @param result_extensions: file type extensions of generated result files
        @param result_stems: file names (without extension) the pipeline writes; verify_* files are always included
        """

        defaults = {
            "results_path":config.RESULTS_DIR,
            "result_extensions":config.RESULT_EXTENSIONS,
            "result_stems":config.RESULT_STEMS,
        }

        overrides = {
            "results_path": results_path,
            "result_extensions": result_extensions,
            "result_stems": result_stems,
        }

        for name, default in defaults.items():
            value = overrides[name] if overrides[name] is not None else default
            setattr(self, name, value)
        self.results_path = Path(self.results_path)


    def build_results_directory(self):
        """
        Creates the results directory (and parents) when missing; raises OSError when it cannot be written to
        """
        self.results_path.mkdir(parents = True, exist_ok = True)
        probe = self.results_path / ".write_probe"
        probe.touch()
        probe.unlink()


    def is_result_file(self, file: Path) -> bool:
        """
        True only for files this pipeline writes, so user files sharing the directory are left alone
        """
        if not file.is_file() or file.suffix not in self.result_extensions:
            return False
        return file.stem in self.result_stems or file.stem.startswith(config.RESULT_STEM_PREFIXES)


    def clean_results_directory(self):
        """
        Removes stale result files written by earlier runs; README.md and any other file stay in place
        @return: number of files removed
        """
        removed = 0
        for file in self.results_path.iterdir():
            if self.is_result_file(file):
                file.unlink()
                removed += 1
        return removed


    def run_build(self):
        """
        Executes all directory building and cleaning operations
        """
        self.build_results_directory()
        return self.clean_results_directory()
