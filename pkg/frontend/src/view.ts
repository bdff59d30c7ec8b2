// DOM rendering. Views are rebuilt from store snapshots; no statistic is
// ever computed here, values arrive from the service as-is.

import type { CodingState } from './state'
import { RUBRIC } from './rubric'
import type {
  ActionSummary,
  CategoryReliability,
  ReliabilityReport,
  UtteranceView,
} from './types'
import { CATEGORIES } from './types'

export const KAPPA_ATTENTION_THRESHOLD = 0.7

const el = <K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] => {
  const node = document.createElement(tag)
  if (className) node.className = className
  if (text !== undefined) node.textContent = text
  return node
}

const describeAction = (action: ActionSummary | null, review: boolean): string => {
  if (!action) return 'none (session start)'
  const kind = action.kind === 'HINT' ? 'hint request' : 'attempt'
  if (!review) return `${kind} on ${action.step_id}`
  return `${kind} on ${action.step_id} (${action.correct ? 'correct' : 'incorrect'})`
}

export function renderContext(
  utterance: UtteranceView,
  reviewMode: boolean,
): HTMLElement {
  const box = el('div', 'context')
  const prior = el('div', 'context-prior')
  prior.append(
    el('span', 'context-label', 'Before: '),
    // The prior action already happened; its correctness is always shown.
    el('span', undefined, describeAction(utterance.prior_action, true)),
  )
  const next = el('div', 'context-next')
  next.append(
    el('span', 'context-label', 'Coding window precedes: '),
    // Next-attempt correctness is review-only so first-pass coding stays
    // blind to the outcome being modeled.
    el('span', undefined, describeAction(utterance.next_action, reviewMode)),
  )
  box.append(prior, next)
  return box
}

export function renderCodeButtons(state: CodingState): HTMLElement {
  const bar = el('div', 'code-buttons')
  RUBRIC.forEach((entry) => {
    const button = el('button', 'code-button', `${entry.key} ${entry.title}`)
    button.dataset.category = entry.category
    button.classList.toggle('active', state.draft[entry.category])
    bar.append(button)
  })
  return bar
}

export function renderStatus(state: CodingState): HTMLElement {
  const box = el('div', `status status-${state.status}`)
  if (state.status === 'error') {
    box.append(
      el('span', 'status-text', `Save failed: ${state.lastError ?? 'unknown error'}`),
    )
    const retry = el('button', 'retry-button', 'Retry save')
    retry.dataset.action = 'retry'
    box.append(retry)
  } else if (state.status === 'saving') {
    box.append(el('span', 'status-text', 'Saving...'))
  } else if (state.status === 'dirty') {
    box.append(el('span', 'status-text', 'Unsaved changes (Enter saves)'))
  } else {
    box.append(el('span', 'status-text', 'Saved'))
  }
  return box
}

export function renderUtterancePanel(state: CodingState): HTMLElement {
  const panel = el('section', 'utterance-panel')
  const utterance = state.utterances[state.cursor]
  if (!utterance) {
    panel.append(el('p', 'empty', 'Pick a session to start coding.'))
    return panel
  }
  const header = el('div', 'utterance-header')
  header.append(
    el('span', 'utterance-id', utterance.utterance_id),
    el(
      'span',
      'utterance-position',
      `${state.cursor + 1} / ${state.utterances.length}`,
    ),
    el(
      'span',
      'progress',
      `coded by me: ${state.codedByMe} / ${state.utterances.length}`,
    ),
  )
  const text = el(
    'blockquote',
    'utterance-text',
    utterance.text || '(no speech in this window)',
  )
  const codedBy = el(
    'div',
    'coded-by',
    utterance.coded_by.length
      ? `coded by: ${utterance.coded_by.join(', ')}`
      : 'not coded yet',
  )
  panel.append(
    header,
    renderContext(utterance, state.reviewMode),
    text,
    renderCodeButtons(state),
    renderStatus(state),
    codedBy,
  )
  return panel
}

export function renderReliability(report: ReliabilityReport | null): HTMLElement {
  const panel = el('section', 'reliability-panel')
  panel.append(el('h2', undefined, 'Inter-rater reliability'))
  if (!report) {
    panel.append(el('p', 'reliability-note', 'Not fetched yet.'))
    return panel
  }
  if (report.status !== 'ok') {
    panel.append(el('p', 'reliability-note', 'Insufficient overlap: no double-coded utterances yet.'))
    return panel
  }
  panel.append(
    el(
      'p',
      'reliability-note',
      `${report.n_items} double-coded utterances (${(report.coders ?? []).join(' vs ')})`,
    ),
  )
  const list = el('ul', 'kappa-list')
  for (const category of CATEGORIES) {
    const cell: CategoryReliability | undefined = report.categories[category]
    if (!cell) continue
    const item = el('li', 'kappa-item')
    item.dataset.category = category
    // Rendered verbatim from the service; the UI never computes kappa.
    const value = cell.kappa === null ? 'undefined' : cell.kappa.toFixed(3)
    item.append(
      el('span', 'kappa-category', category),
      el('span', 'kappa-value', value),
      el('span', 'kappa-n', `n=${cell.n_items}`),
    )
    const needsAttention =
      cell.kappa !== null && cell.kappa < KAPPA_ATTENTION_THRESHOLD
    item.classList.toggle('kappa-low', needsAttention)
    if (needsAttention) {
      item.append(el('span', 'kappa-flag', 'below 0.7: recode this category'))
    }
    list.append(item)
  }
  panel.append(list)
  return panel
}

export function renderRubricPanel(): HTMLElement {
  const details = el('details', 'rubric-panel') as HTMLDetailsElement
  details.append(el('summary', undefined, 'Coding rubric'))
  for (const entry of RUBRIC) {
    const block = el('div', 'rubric-entry')
    block.append(el('h3', undefined, `${entry.key}. ${entry.title}`))
    const list = el('ul')
    entry.guidance.forEach((line) => list.append(el('li', undefined, line)))
    block.append(list, el('p', 'rubric-example', entry.example))
    details.append(block)
  }
  return details
}
