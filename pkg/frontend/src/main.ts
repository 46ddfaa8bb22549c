import { ApiClient, Catalog } from './api.js';
import { AnnotateView } from './annotate.js';
import { WorkbenchView } from './workbench.js';

async function boot(): Promise<void> {
  const client = new ApiClient('');
  const annotateRoot = document.getElementById('annotate');
  const workbenchRoot = document.getElementById('workbench');
  const status = document.getElementById('status');
  if (!annotateRoot || !workbenchRoot || !status) return;

  try {
    const [catalog, sampleList] = await Promise.all([
      client.catalog(),
      client.samples(),
    ]);
    const sampleIds = sampleList.samples.map((s) => s.id);

    const workbench = new WorkbenchView(workbenchRoot, client, catalog);
    const annotate = new AnnotateView(annotateRoot, client, {
      onCatalogChange: (updated: Catalog) => {
        annotate.render(updated, sampleIds);
        workbench.setCatalog(updated);
      },
    });
    annotate.render(catalog, sampleIds);
    workbench.render(catalog, sampleList.samples);
    status.textContent = `${sampleList.samples.length} samples · k=${catalog.k} · base layer ${catalog.base_layer_id}`;
  } catch (err) {
    status.textContent = `failed to reach service: ${String(err)}`;
  }
}

void boot();
