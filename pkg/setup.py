from setuptools import setup, find_packages

VERSION = '0.1.0' 
DESCRIPTION = 'pykged'
LONG_DESCRIPTION = """
Entity disambiguation with an LLM guided by a knowledge graph taxonomy.\n
Candidates are hung under their KG classes and the resulting DAG is pruned with multiple-choice questions.\n
"""

# Setting up
setup(
        name="pykged", 
        version=VERSION,
        description=DESCRIPTION,
        long_description=LONG_DESCRIPTION,
        packages=find_packages(exclude=["tests", "tests.*"]),
        package_data = {"pykged":["data/*.tsv", "data/*.jsonl", "data/*.json", "data/*.edges", "data/*.yaml"]},
        install_requires=[
            'numpy',
            'polars>=0.20.0', # comment_prefix in read_csv
            'networkx>=2.6',
            'jinja2',
            'pyyaml',
            'tqdm',
            'aiohttp',
            'tenacity>=8.0',
            ],
        extras_require = {
                "test" : ["pytest"]
            },
        entry_points = {
                "console_scripts": ["pykged=pykged.cli:entry"]
            },
        license='http://www.apache.org/licenses/LICENSE-2.0',
        keywords=['python', 'entity disambiguation', 'knowledge graph'],
        classifiers= [
            "Development Status :: 3 - Alpha",
            "Programming Language :: Python :: 3",
            "Operating System :: MacOS :: MacOS X",
            "Operating System :: POSIX :: Linux",
        ]
)
